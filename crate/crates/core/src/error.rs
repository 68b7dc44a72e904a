use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Validation(ValidationReport),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("field has {found} values but the grid has {expected} nodes")]
    GridMismatch { expected: usize, found: usize },

    #[error("field is identically zero")]
    ZeroField,

    #[error("sign split is degenerate: positive part {plus_zero}, negative part {minus_zero} vanish")]
    DegenerateSplit { plus_zero: bool, minus_zero: bool },

    #[error("scalings must be positive, got alpha = {alpha}, beta = {beta}")]
    NonpositiveScaling { alpha: f64, beta: f64 },

    #[error("face sign condition fails on axis {axis} ({face} face) at {point:?}: value {value}")]
    FaceSignViolation {
        axis: usize,
        face: &'static str,
        point: Vec<f64>,
        value: f64,
    },

    #[error("no bracket with the required face signs after {expansions} expansions")]
    BracketFailure { expansions: usize },

    #[error("root finder did not converge: residual {residual} after {iterations} Newton steps")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("iterate left the sign-changing set at iteration {iter} (part mass ratio {ratio:e})")]
    PartCollapse { iter: usize, ratio: f64 },

    #[error("no convergence in {iters} iterations (residual {residual:e}, pair deviation {pair_dev:e})")]
    MaxIters {
        iters: usize,
        residual: f64,
        pair_dev: f64,
    },

    #[error("descent stalled at iteration {iter}: no admissible step after backtracking (residual {residual:e})")]
    Stalled { iter: usize, residual: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
