//! Projected gradient descent on the nodal Nehari set and the Nehari manifold.
//!
//! Each iteration steps along the L² residual, `w = v - τ r(v)`, and maps `w`
//! back onto the constraint set: `v' = αw⁺ + βw⁻` for nodal runs, `v' = t w` for
//! ground-state runs. A step is accepted when the projected energy does not
//! increase; otherwise `τ` is shrunk. Stationary points of the loop are critical
//! points of `I_b`, since the residual vanishes there.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functional::{Evaluation, Problem};
use crate::grid::{l2_inner, negative_part, positive_part, sign_changes, Field};
use crate::nehari::{solve_pair, NehariOptions, NehariPair, PairSystem, ScalarSystem};

/// Starting field of a descent.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedKind {
    /// `x_1 exp(-|x|²/2)`, randomly perturbed from `rng_seed`.
    OddBump,
    /// `exp(-|x|²/2)`, randomly perturbed from `rng_seed`.
    Gaussian,
    /// Explicit nodal values, used unperturbed.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backtracking {
    pub shrink: f64,
    pub grow: f64,
    pub max_shrinks: usize,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            grow: 1.1,
            max_shrinks: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Initial step, divided by `a + b G(seed)` before use.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop when `max_i |r_i| <= residual_tol` ...
    pub residual_tol: f64,
    /// ... and the last projection moved the iterate by at most this much.
    pub pair_tol: f64,
    pub seed_kind: SeedKind,
    pub rng_seed: u64,
    /// Relative size of the random perturbation of analytic seeds.
    pub seed_perturbation: f64,
    pub backtracking: Backtracking,
    /// Keep every `trace_every`-th iteration in the trace.
    pub trace_every: usize,
    /// Stream trace lines `iter energy residual` to this file.
    pub trace_file: Option<PathBuf>,
    pub nehari: NehariOptions,
    /// Mass ratio `min(∫(u⁺)², ∫(u⁻)²) / ∫u²` below which a nodal run fails.
    pub collapse_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-2,
            max_iters: 200_000,
            residual_tol: 1e-8,
            pair_tol: 1e-8,
            seed_kind: SeedKind::OddBump,
            rng_seed: 0,
            seed_perturbation: 0.05,
            backtracking: Backtracking::default(),
            trace_every: 100,
            trace_file: None,
            nehari: NehariOptions::default(),
            collapse_threshold: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn nodal() -> Self {
        Self::default()
    }

    pub fn ground() -> Self {
        Self {
            seed_kind: SeedKind::Gaussian,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: SeedKind) -> Self {
        self.seed_kind = seed;
        self
    }
}

/// Projection data of the returned field.
#[derive(Debug, Clone, PartialEq)]
pub enum EndProjection {
    Pair(NehariPair),
    Scalar(f64),
}

impl EndProjection {
    pub fn deviation_from_unit(&self) -> f64 {
        match self {
            EndProjection::Pair(p) => p.deviation_from_unit(),
            EndProjection::Scalar(t) => (t - 1.0).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: Field,
    /// `I_b(field)`.
    pub level: f64,
    pub residual_inf: f64,
    pub iters: usize,
    pub trace: Vec<TracePoint>,
    /// Projection applied to the last unprojected iterate.
    pub pair_at_end: EndProjection,
    /// Largest accepted energy increase (roundoff band), `<= 0` for strictly
    /// monotone runs.
    pub max_energy_increase: f64,
}

impl SolveResult {
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.trace {
            out.push_str(&format!("{} {:.16e} {:.16e}\n", t.iter, t.energy, t.residual));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Projected field together with `L v`.
pub struct Projected {
    pub field: Field,
    pub lv: Vec<f64>,
    pub info: EndProjection,
}

/// Map from an arbitrary iterate onto the constraint set.
pub trait Projection {
    fn project(&self, pb: &Problem, w: &Field) -> Result<Projected>;
}

/// `w ↦ αw⁺ + βw⁻` with `(α, β)` from the pair system.
pub struct NodalProjection(pub NehariOptions);

impl Projection for NodalProjection {
    fn project(&self, pb: &Problem, w: &Field) -> Result<Projected> {
        let (eb, ops) = pb.components_with_ops(w);
        let pair = solve_pair(&PairSystem::new(pb.params(), &eb), &self.0)?;
        let (field, lv) = ops.recombine(pair.alpha, pair.beta);
        Ok(Projected {
            field,
            lv,
            info: EndProjection::Pair(pair),
        })
    }
}

/// `w ↦ t w` with `t` the root of the scalar fibre equation.
pub struct ScalarProjection;

/// Same as [`ScalarProjection`] but only valid for `b = 0`, where
/// `t = ((aS + B)/P)^{1/(p-2)}`.
pub struct ClosedFormScalarProjection;

fn scalar_parts(pb: &Problem, w: &Field) -> Result<(ScalarSystem, Vec<f64>)> {
    if w.is_zero() {
        return Err(Error::ZeroField);
    }
    let lw = pb.kernel().apply(w.values());
    let mp = pb.params();
    let sys = ScalarSystem {
        a: mp.a,
        b: mp.b,
        p: mp.p,
        s: crate::functional::dot(&lw, w.values()),
        v: pb.weighted_l2(w, w)?,
        power: pb.nonlinear_work(w),
    };
    Ok((sys, lw))
}

fn scale_projected(w: &Field, lw: Vec<f64>, t: f64) -> Projected {
    Projected {
        field: w.scale(t),
        lv: lw.into_iter().map(|x| t * x).collect(),
        info: EndProjection::Scalar(t),
    }
}

impl Projection for ScalarProjection {
    fn project(&self, pb: &Problem, w: &Field) -> Result<Projected> {
        let (sys, lw) = scalar_parts(pb, w)?;
        Ok(scale_projected(w, lw, sys.root()?))
    }
}

impl Projection for ClosedFormScalarProjection {
    fn project(&self, pb: &Problem, w: &Field) -> Result<Projected> {
        if pb.params().b != 0.0 {
            return Err(Error::Precondition(
                "closed-form scalar projection requires b = 0".into(),
            ));
        }
        let (sys, lw) = scalar_parts(pb, w)?;
        Ok(scale_projected(w, lw, sys.root_without_kirchhoff()))
    }
}

/// Build the starting field of `cfg` on the grid of `pb`.
pub fn seed_field(pb: &Problem, cfg: &SolverConfig) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let eps = cfg.seed_perturbation;
    let (amp, width, shift): (f64, f64, f64) = (
        1.0 + eps * rng.gen_range(-1.0..1.0),
        1.0 + eps * rng.gen_range(-1.0..1.0),
        eps * rng.gen_range(-1.0..1.0),
    );
    match &cfg.seed_kind {
        SeedKind::OddBump => Ok(pb.field(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            amp * (x[0] - shift) * (-0.5 * r2 / width).exp()
        })),
        SeedKind::Gaussian => Ok(pb.field(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            amp * (-0.5 * (r2 - 2.0 * shift * x[0]) / width).exp()
        })),
        SeedKind::Table(values) => pb.field_from_values(values.clone()),
    }
}

/// Least-energy sign-changing solution: minimize `I_b` over the nodal Nehari set.
pub fn minimize_nodal(pb: &Problem, cfg: &SolverConfig) -> Result<SolveResult> {
    let seed = seed_field(pb, cfg)?;
    let (p, n) = (positive_part(&seed), negative_part(&seed));
    crate::functional::require_split(&p, &n)?;
    descend(pb, seed, cfg, &NodalProjection(cfg.nehari.clone()), true)
}

/// Ground state: minimize `I_b` over the Nehari manifold.
pub fn minimize_ground(pb: &Problem, cfg: &SolverConfig) -> Result<SolveResult> {
    minimize_ground_with(pb, cfg, &ScalarProjection)
}

pub fn minimize_ground_with(
    pb: &Problem,
    cfg: &SolverConfig,
    projection: &dyn Projection,
) -> Result<SolveResult> {
    let seed = seed_field(pb, cfg)?;
    if seed.is_zero() {
        return Err(Error::ZeroField);
    }
    descend(pb, seed, cfg, projection, false)
}

struct TraceWriter {
    every: usize,
    points: Vec<TracePoint>,
    out: Option<(PathBuf, BufWriter<File>)>,
}

impl TraceWriter {
    fn new(cfg: &SolverConfig) -> Result<Self> {
        let out = match &cfg.trace_file {
            Some(path) => {
                let f = File::create(path).map_err(|e| Error::io(path, e))?;
                Some((path.clone(), BufWriter::new(f)))
            }
            None => None,
        };
        Ok(Self {
            every: cfg.trace_every.max(1),
            points: Vec::new(),
            out,
        })
    }

    fn record(&mut self, pt: TracePoint, force: bool) -> Result<()> {
        if !force && pt.iter % self.every != 0 {
            return Ok(());
        }
        if self.points.last().map(|l| l.iter) == Some(pt.iter) {
            return Ok(());
        }
        self.points.push(pt);
        if let Some((path, w)) = &mut self.out {
            writeln!(w, "{} {:.16e} {:.16e}", pt.iter, pt.energy, pt.residual)
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<TracePoint>> {
        if let Some((path, w)) = &mut self.out {
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(self.points)
    }
}

fn part_mass_ratio(w: &Field) -> f64 {
    let (mut plus, mut minus) = (0.0, 0.0);
    for &v in w.values() {
        if v > 0.0 {
            plus += v * v;
        } else {
            minus += v * v;
        }
    }
    let total = plus + minus;
    if total == 0.0 {
        0.0
    } else {
        plus.min(minus) / total
    }
}

fn l2_norm(r: &Field) -> f64 {
    r.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rounding noise of the residual: two evaluations of the same field through
/// differently ordered sums differ by roughly this much in L² norm.
fn residual_noise(pb: &Problem, v: &Field) -> f64 {
    let nl = pb.nonlinearity();
    let f2: f64 = v.values().iter().map(|&x| nl.f(x).powi(2)).sum();
    4.0 * f64::EPSILON * f2.sqrt()
}

/// Roundoff band for energy comparisons.
fn energy_slack(e: f64) -> f64 {
    1e-13 * (1.0 + e.abs())
}

fn descend(
    pb: &Problem,
    seed: Field,
    cfg: &SolverConfig,
    projection: &dyn Projection,
    nodal: bool,
) -> Result<SolveResult> {
    if !(cfg.residual_tol > 0.0) || cfg.max_iters == 0 {
        return Err(Error::Precondition("need residual_tol > 0 and max_iters >= 1".into()));
    }
    let collapse = |iter: usize, w: &Field| -> Result<()> {
        if nodal {
            let ratio = part_mass_ratio(w);
            if ratio < cfg.collapse_threshold {
                return Err(Error::PartCollapse { iter, ratio });
            }
        }
        Ok(())
    };
    let project = |iter: usize, w: &Field| -> Result<(Projected, Evaluation)> {
        collapse(iter, w)?;
        let pr = projection.project(pb, w).map_err(|e| match e {
            Error::DegenerateSplit { .. } => Error::PartCollapse {
                iter,
                ratio: part_mass_ratio(w),
            },
            other => other,
        })?;
        let ev = pb.evaluate_with(&pr.field, &pr.lv);
        Ok((pr, ev))
    };

    let mut trace = TraceWriter::new(cfg)?;
    let (mut cur, mut ev) = project(0, &seed)?;
    let mp = pb.params();
    let mut tau = cfg.step_size / (mp.a + mp.b * ev.gagliardo);
    let mut max_increase = f64::NEG_INFINITY;
    let bt = &cfg.backtracking;

    for iter in 0..=cfg.max_iters {
        let deviation = cur.info.deviation_from_unit();
        let done = ev.residual_inf <= cfg.residual_tol && deviation <= cfg.pair_tol;
        trace.record(
            TracePoint {
                iter,
                energy: ev.energy,
                residual: ev.residual_inf,
            },
            done || iter == cfg.max_iters,
        )?;
        if done {
            return Ok(SolveResult {
                field: cur.field,
                level: ev.energy,
                residual_inf: ev.residual_inf,
                iters: iter,
                trace: trace.finish()?,
                pair_at_end: cur.info,
                max_energy_increase: max_increase,
            });
        }
        if iter == cfg.max_iters {
            break;
        }

        let mut accepted = None;
        for _ in 0..=bt.max_shrinks {
            let w = cur.field.combine(1.0, &ev.residual, -tau);
            let trial = project(iter + 1, &w);
            let (pr, ev_new) = match trial {
                Ok(t) => t,
                // A step that leaves the admissible set is treated as too long.
                Err(Error::PartCollapse { .. }) | Err(Error::BracketFailure { .. }) | Err(Error::NoConvergence { .. })
                    if tau > f64::MIN_POSITIVE =>
                {
                    tau *= bt.shrink;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let de = ev_new.energy - ev.energy;
            let slack = energy_slack(ev.energy);
            let ok = de < -slack
                || (de <= slack && l2_norm(&ev_new.residual) <= l2_norm(&ev.residual) + residual_noise(pb, &cur.field));
            if ok {
                accepted = Some((pr, ev_new, de));
                break;
            }
            tau *= bt.shrink;
        }
        match accepted {
            Some((pr, ev_new, de)) => {
                max_increase = max_increase.max(de);
                cur = pr;
                ev = ev_new;
                tau *= bt.grow;
            }
            None => {
                // Re-check the collapse condition so a vanishing part is reported as such.
                collapse(iter + 1, &cur.field.combine(1.0, &ev.residual, -tau))?;
                return Err(Error::Stalled {
                    iter,
                    residual: ev.residual_inf,
                });
            }
        }
    }
    trace.finish()?;
    Err(Error::MaxIters {
        iters: cfg.max_iters,
        residual: ev.residual_inf,
        pair_dev: cur.info.deviation_from_unit(),
    })
}

/// First-order optimality report for a field.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityReport {
    pub residual_inf: f64,
    /// `⟨I_b'(u), u⁺⟩`.
    pub pairing_plus: f64,
    /// `⟨I_b'(u), u⁻⟩`.
    pub pairing_minus: f64,
    pub sign_changes: usize,
    pub nontrivial: bool,
    pub residual_ok: bool,
    pub pairings_ok: bool,
}

impl CriticalityReport {
    /// Nontrivial critical point within tolerance.
    pub fn passes(&self) -> bool {
        self.nontrivial && self.residual_ok && self.pairings_ok
    }

    /// Critical and sign-changing.
    pub fn is_nodal(&self) -> bool {
        self.passes() && self.sign_changes > 0
    }
}

/// Check `max|r_i| <= tol` and `|⟨I_b'(u), u±⟩| <= tol (1 + ∫|u|)`.
pub fn verify_critical(pb: &Problem, u: &Field, tol: f64) -> Result<CriticalityReport> {
    let r = pb.residual(u)?;
    let residual_inf = r.max_abs();
    let (p, n) = (positive_part(u), negative_part(u));
    let pairing_plus = l2_inner(&r, &p);
    let pairing_minus = l2_inner(&r, &n);
    let l1 = u.grid().cell_measure() * u.values().iter().map(|v| v.abs()).sum::<f64>();
    let ptol = tol * (1.0 + l1);
    Ok(CriticalityReport {
        residual_inf,
        pairing_plus,
        pairing_minus,
        sign_changes: sign_changes(u, 1e-10),
        nontrivial: !u.is_zero(),
        residual_ok: residual_inf <= tol,
        pairings_ok: pairing_plus.abs() <= ptol && pairing_minus.abs() <= ptol,
    })
}
