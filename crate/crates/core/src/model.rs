//! Problem data for the fractional Kirchhoff equation
//!
//! ```text
//! (a + b [u]²) (-Δ)^s u + V(x) u = |u|^{p-2} u   in ℝ^N
//! ```
//!
//! together with admissibility checks on the coefficients, the potential and
//! the nonlinearity. Everything here is a plain value type; numerical work
//! lives in [`crate::grid`] and [`crate::functional`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients and discretization size of the truncated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Linear diffusion coefficient, `a > 0`.
    pub a: f64,
    /// Kirchhoff coefficient, `b >= 0`.
    pub b: f64,
    /// Fractional order, `0 < s < 1`.
    pub s: f64,
    /// Spatial dimension N.
    pub dim: usize,
    /// Exponent of the power nonlinearity.
    pub p: f64,
    /// The truncation box is `[-L, L]^N`.
    pub half_width: f64,
    /// Grid points per axis.
    pub grid_points: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            s: 0.5,
            dim: 1,
            p: 6.0,
            half_width: 20.0,
            grid_points: 512,
        }
    }
}

impl ModelParams {
    /// Fractional Sobolev critical exponent `2N/(N-2s)`, or `+inf` when `N <= 2s`.
    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.dim, self.s)
    }

    pub fn with_b(&self, b: f64) -> Self {
        Self { b, ..self.clone() }
    }

    pub fn with_grid_points(&self, grid_points: usize) -> Self {
        Self {
            grid_points,
            ..self.clone()
        }
    }
}

pub fn critical_exponent(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    if n > 2.0 * s {
        2.0 * n / (n - 2.0 * s)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Constant,
    Harmonic,
    CustomTable,
}

/// Trapping potential `V`.
///
/// `Constant` is `V ≡ v0`, `Harmonic` is `v0 + curvature·|x|²` and
/// `CustomTable` carries one value per grid node (row-major in 2D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub v0: f64,
    #[serde(default = "default_curvature")]
    pub curvature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

fn default_curvature() -> f64 {
    1.0
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::harmonic(1.0)
    }
}

impl PotentialSpec {
    pub fn constant(v0: f64) -> Self {
        Self {
            kind: PotentialKind::Constant,
            v0,
            curvature: 0.0,
            table: None,
        }
    }

    /// `V(x) = v0 + |x|²`.
    pub fn harmonic(v0: f64) -> Self {
        Self {
            kind: PotentialKind::Harmonic,
            v0,
            curvature: 1.0,
            table: None,
        }
    }

    pub fn custom_table(v0: f64, table: Vec<f64>) -> Self {
        Self {
            kind: PotentialKind::CustomTable,
            v0,
            curvature: 0.0,
            table: Some(table),
        }
    }

    /// Value at a point. For tables `node` is the flat grid index; the point
    /// coordinates are ignored.
    pub fn eval(&self, x: &[f64], node: usize) -> f64 {
        match self.kind {
            PotentialKind::Constant => self.v0,
            PotentialKind::Harmonic => {
                self.v0 + self.curvature * x.iter().map(|xi| xi * xi).sum::<f64>()
            }
            PotentialKind::CustomTable => self
                .table
                .as_ref()
                .and_then(|t| t.get(node).copied())
                .unwrap_or(f64::NAN),
        }
    }

    /// Even under `x ↦ -x` for the analytic kinds.
    pub fn is_even(&self) -> bool {
        !matches!(self.kind, PotentialKind::CustomTable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKind {
    #[default]
    PurePower,
}

/// Pure power nonlinearity `f(u) = |u|^{p-2} u` with primitive `F(u) = |u|^p / p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    pub p: f64,
}

impl NonlinearitySpec {
    pub fn pure_power(p: f64) -> Self {
        Self {
            kind: NonlinearityKind::PurePower,
            p,
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        match self.kind {
            NonlinearityKind::PurePower => u.abs().powf(self.p - 2.0) * u,
        }
    }

    #[allow(non_snake_case)]
    pub fn F(&self, u: f64) -> f64 {
        match self.kind {
            NonlinearityKind::PurePower => u.abs().powf(self.p) / self.p,
        }
    }

    /// `u·f(u) - 4F(u)`, which is `(1 - 4/p)|u|^p` for the pure power.
    pub fn h(&self, u: f64) -> f64 {
        match self.kind {
            NonlinearityKind::PurePower => (1.0 - 4.0 / self.p) * u.abs().powf(self.p),
        }
    }

    /// `u·f(u) = |u|^p`.
    pub fn u_f(&self, u: f64) -> f64 {
        match self.kind {
            NonlinearityKind::PurePower => u.abs().powf(self.p),
        }
    }

    /// Derivative `f'(u) = (p-1)|u|^{p-2}`.
    pub fn df(&self, u: f64) -> f64 {
        match self.kind {
            NonlinearityKind::PurePower => (self.p - 1.0) * u.abs().powf(self.p - 2.0),
        }
    }
}

/// `f(u) = |u|^{p-2} u`.
pub fn f_eval(nl: &NonlinearitySpec, u: f64) -> f64 {
    nl.f(u)
}

/// `F(u) = |u|^p / p`.
#[allow(non_snake_case)]
pub fn F_eval(nl: &NonlinearitySpec, u: f64) -> f64 {
    nl.F(u)
}

/// Structural hypothesis that a configuration can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Hypothesis {
    /// `a > 0`.
    PositiveA,
    /// `b >= 0`.
    NonnegativeB,
    /// `0 < s < 1`.
    FractionalOrder,
    /// `N >= 1`.
    Dimension,
    /// `L > 0`.
    HalfWidth,
    /// `M >= 4`.
    GridSize,
    /// `inf V >= V0 > 0`.
    V1,
    /// Coercivity of `V` (sufficient for the measure condition).
    V2,
    /// Subcritical growth `p < 2*_s`.
    F2,
    /// Strict monotonicity of `f(u)/|u|^3`, i.e. `p > 4`.
    F4,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::PositiveA => "a > 0",
            Hypothesis::NonnegativeB => "b >= 0",
            Hypothesis::FractionalOrder => "0 < s < 1",
            Hypothesis::Dimension => "dim >= 1",
            Hypothesis::HalfWidth => "half_width > 0",
            Hypothesis::GridSize => "grid_points >= 4",
            Hypothesis::V1 => "(V1) inf V >= V0 > 0",
            Hypothesis::V2 => "(V2) V coercive",
            Hypothesis::F2 => "(f2) p < 2*_s",
            Hypothesis::F4 => "(f4) p > 4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub hypothesis: Hypothesis,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, h: Hypothesis) -> bool {
        self.violations.iter().any(|v| v.hypothesis == h)
    }

    fn push(&mut self, hypothesis: Hypothesis, detail: impl Into<String>) {
        self.violations.push(Violation {
            hypothesis,
            detail: detail.into(),
        });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("all hypotheses hold");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.hypothesis, v.detail)?;
        }
        Ok(())
    }
}

/// Check every structural hypothesis. The potential is sampled on the grid
/// nodes implied by `mp`.
pub fn validate_params(
    mp: &ModelParams,
    pot: &PotentialSpec,
    nl: &NonlinearitySpec,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !(mp.a > 0.0) {
        report.push(Hypothesis::PositiveA, format!("a = {}", mp.a));
    }
    if !(mp.b >= 0.0) {
        report.push(Hypothesis::NonnegativeB, format!("b = {}", mp.b));
    }
    let s_ok = mp.s > 0.0 && mp.s < 1.0;
    if !s_ok {
        report.push(Hypothesis::FractionalOrder, format!("s = {}", mp.s));
    }
    if mp.dim == 0 {
        report.push(Hypothesis::Dimension, "dim = 0");
    }
    if !(mp.half_width > 0.0) {
        report.push(Hypothesis::HalfWidth, format!("half_width = {}", mp.half_width));
    }
    if mp.grid_points < 4 {
        report.push(Hypothesis::GridSize, format!("grid_points = {}", mp.grid_points));
    }

    if (nl.p - mp.p).abs() > 0.0 {
        report.push(
            Hypothesis::F4,
            format!("nonlinearity exponent {} differs from model exponent {}", nl.p, mp.p),
        );
    }
    if !(mp.p > 4.0) {
        report.push(Hypothesis::F4, format!("p = {} is not > 4", mp.p));
    }
    if s_ok && mp.dim > 0 {
        let crit = mp.critical_exponent();
        if !(mp.p < crit) {
            report.push(
                Hypothesis::F2,
                format!("p = {} is not below 2*_s = {}", mp.p, crit),
            );
        }
    }

    if !(pot.v0 > 0.0) {
        report.push(Hypothesis::V1, format!("V0 = {}", pot.v0));
    }
    match pot.kind {
        PotentialKind::Constant => {
            // A constant potential is not coercive; compactness then comes only
            // from the truncation.
            report.push(Hypothesis::V2, "constant potential is not coercive");
        }
        PotentialKind::Harmonic => {
            if !(pot.curvature > 0.0) {
                report.push(
                    Hypothesis::V2,
                    format!("harmonic curvature {} is not positive", pot.curvature),
                );
            }
        }
        PotentialKind::CustomTable => {
            let expected = mp.grid_points.checked_pow(mp.dim as u32).unwrap_or(0);
            match &pot.table {
                None => report.push(Hypothesis::V1, "custom-table potential without values"),
                Some(t) if t.len() != expected => report.push(
                    Hypothesis::V1,
                    format!("table has {} values, grid has {}", t.len(), expected),
                ),
                _ => {}
            }
        }
    }

    if mp.grid_points >= 1 && mp.dim >= 1 && mp.half_width > 0.0 && mp.dim <= 3 {
        if let Some(vmin) = min_on_grid(mp, pot) {
            if !(vmin >= pot.v0) || !vmin.is_finite() {
                report.push(
                    Hypothesis::V1,
                    format!("min V on grid = {} is below V0 = {}", vmin, pot.v0),
                );
            }
        }
    }

    report
}

fn min_on_grid(mp: &ModelParams, pot: &PotentialSpec) -> Option<f64> {
    let m = mp.grid_points;
    let total = m.checked_pow(mp.dim as u32)?;
    if pot.kind == PotentialKind::CustomTable
        && pot.table.as_ref().map(|t| t.len()) != Some(total)
    {
        return None;
    }
    let h = 2.0 * mp.half_width / m as f64;
    let mut x = vec![0.0; mp.dim];
    let mut vmin = f64::INFINITY;
    for node in 0..total {
        let mut rem = node;
        for d in (0..mp.dim).rev() {
            x[d] = -mp.half_width + ((rem % m) as f64 + 0.5) * h;
            rem /= m;
        }
        let v = pot.eval(&x, node);
        if v.is_nan() {
            return Some(f64::NAN);
        }
        vmin = vmin.min(v);
    }
    Some(vmin)
}

/// On-disk configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub a: f64,
    pub b: f64,
    pub s: f64,
    pub dim: usize,
    pub p: f64,
    pub half_width: f64,
    pub grid_points: usize,
    pub potential: PotentialSpec,
    pub nonlinearity: NonlinearityConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NonlinearityConfig {
    pub kind: NonlinearityKind,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self::from_parts(&ModelParams::default(), &PotentialSpec::default())
    }
}

impl ProblemConfig {
    pub fn from_parts(mp: &ModelParams, pot: &PotentialSpec) -> Self {
        Self {
            a: mp.a,
            b: mp.b,
            s: mp.s,
            dim: mp.dim,
            p: mp.p,
            half_width: mp.half_width,
            grid_points: mp.grid_points,
            potential: pot.clone(),
            nonlinearity: NonlinearityConfig::default(),
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            a: self.a,
            b: self.b,
            s: self.s,
            dim: self.dim,
            p: self.p,
            half_width: self.half_width,
            grid_points: self.grid_points,
        }
    }

    pub fn nonlinearity(&self) -> NonlinearitySpec {
        NonlinearitySpec {
            kind: self.nonlinearity.kind,
            p: self.p,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_params(&self.params(), &self.potential, &self.nonlinearity())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
