//! Least-energy sign-changing solutions of the fractional Kirchhoff equation
//!
//! ```text
//! (a + b [u]²) (-Δ)^s u + V(x) u = |u|^{p-2} u
//! ```
//!
//! on a truncated box, computed by descent on the nodal Nehari set, together with
//! the ground state on the Nehari manifold and the experiments comparing them.

pub mod error;
pub mod experiments;
pub mod functional;
pub mod grid;
pub mod kernel;
pub mod miranda;
pub mod model;
pub mod nehari;
pub mod solver;

pub use error::{Error, Result};
pub use functional::{EnergyBreakdown, Evaluation, Problem};
pub use grid::{integrate, negative_part, positive_part, Field, Grid};
pub use kernel::{cross_term, gagliardo_form, KernelMatrix};
pub use miranda::{miranda_solve, MirandaBox, MirandaOptions};
pub use model::{ModelParams, NonlinearitySpec, PotentialSpec, ProblemConfig, ValidationReport};
pub use nehari::{pair_project, scalar_project, w_field, NehariOptions, NehariPair};
pub use solver::{minimize_ground, minimize_nodal, verify_critical, SolveResult, SolverConfig};
