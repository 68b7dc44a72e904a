//! Projections onto the Nehari manifold and the nodal Nehari set.
//!
//! For a sign-changing `u` the map
//!
//! ```text
//! W(α, β) = (⟨I_b'(αu⁺ + βu⁻), αu⁺⟩, ⟨I_b'(αu⁺ + βu⁻), βu⁻⟩)
//! ```
//!
//! is a polynomial in `(α, β)` with coefficients `A±, B±, C`, minus the pure-power
//! terms `α^p ∫|u⁺|^p` and `β^p ∫|u⁻|^p`. Its unique positive zero is the pair
//! projection. `W_1` is positive on `α = r` and negative on `α = R` for suitable
//! `0 < r < R` (and likewise `W_2` in `β`), so the zero is bracketed by a box and
//! found with [`crate::miranda::miranda_solve`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::functional::{require_split, EnergyBreakdown, Problem};
use crate::grid::{negative_part, positive_part, Field};
use crate::miranda::{check_face_signs, miranda_solve, BoxMap, MirandaBox, MirandaOptions};
use crate::model::ModelParams;

#[derive(Debug, Clone)]
pub struct NehariOptions {
    /// Target for `max|W|` (pair) or `|⟨I'(tu), tu⟩| / t²` (scalar).
    pub tol: f64,
    pub face_samples: usize,
    /// Geometric expansions of the starting bracket before giving up.
    pub max_expansions: usize,
    pub expansion_factor: f64,
    /// Starting bracket `[r, R]`, relative to the single-part scale.
    pub initial_bracket: (f64, f64),
}

impl Default for NehariOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            face_samples: 33,
            max_expansions: 60,
            expansion_factor: 4.0,
            initial_bracket: (1e-3, 1e3),
        }
    }
}

/// Scaling pair `(α, β)` with `αu⁺ + βu⁻` on the nodal Nehari set.
#[derive(Debug, Clone, PartialEq)]
pub struct NehariPair {
    pub alpha: f64,
    pub beta: f64,
    /// `max|W(α, β)|`.
    pub residual_norm: f64,
    /// `max_i |W_i| / (power term_i)`, the quantity held to the tolerance.
    pub relative_residual: f64,
    /// Bracket in `(α, β)` coordinates.
    pub bracket: MirandaBox,
    pub newton_iters: usize,
}

impl NehariPair {
    /// `max(|α - 1|, |β - 1|)`.
    pub fn deviation_from_unit(&self) -> f64 {
        (self.alpha - 1.0).abs().max((self.beta - 1.0).abs())
    }
}

/// Coefficients of `W` for one field.
#[derive(Debug, Clone, Copy)]
pub struct PairSystem {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub eb: EnergyBreakdown,
}

impl PairSystem {
    pub fn new(mp: &ModelParams, eb: &EnergyBreakdown) -> Self {
        Self {
            a: mp.a,
            b: mp.b,
            p: mp.p,
            eb: *eb,
        }
    }

    /// `W(α, β)`, using `[αu⁺ + βu⁻, αu⁺] = α²A⁺ + αβC` and its mirror.
    pub fn eval(&self, alpha: f64, beta: f64) -> (f64, f64) {
        let e = &self.eb;
        let pp = alpha * alpha * e.a_plus + alpha * beta * e.cross;
        let qq = beta * beta * e.a_minus + alpha * beta * e.cross;
        let coef = self.a + self.b * (pp + qq);
        (
            coef * pp + alpha * alpha * e.b_plus - alpha.powf(self.p) * e.fdot_plus,
            coef * qq + beta * beta * e.b_minus - beta.powf(self.p) * e.fdot_minus,
        )
    }

    /// `∂W/∂(α, β)`.
    pub fn jacobian(&self, alpha: f64, beta: f64) -> [[f64; 2]; 2] {
        let e = &self.eb;
        let (a, b, p) = (self.a, self.b, self.p);
        let pp = alpha * alpha * e.a_plus + alpha * beta * e.cross;
        let qq = beta * beta * e.a_minus + alpha * beta * e.cross;
        let g = pp + qq;
        let coef = a + b * g;
        let pp_a = 2.0 * alpha * e.a_plus + beta * e.cross;
        let pp_b = alpha * e.cross;
        let qq_a = beta * e.cross;
        let qq_b = 2.0 * beta * e.a_minus + alpha * e.cross;
        let g_a = pp_a + qq_a;
        let g_b = pp_b + qq_b;
        [
            [
                b * g_a * pp + coef * pp_a + 2.0 * alpha * e.b_plus
                    - p * alpha.powf(p - 1.0) * e.fdot_plus,
                b * g_b * pp + coef * pp_b,
            ],
            [
                b * g_a * qq + coef * qq_a,
                b * g_b * qq + coef * qq_b + 2.0 * beta * e.b_minus
                    - p * beta.powf(p - 1.0) * e.fdot_minus,
            ],
        ]
    }

    /// `(α^p ∫|u⁺|^p, β^p ∫|u⁻|^p)`.
    pub fn power_terms(&self, alpha: f64, beta: f64) -> (f64, f64) {
        (
            alpha.powf(self.p) * self.eb.fdot_plus,
            beta.powf(self.p) * self.eb.fdot_minus,
        )
    }

    /// `max_i |W_i(α, β)| / power term_i`.
    pub fn relative_residual(&self, alpha: f64, beta: f64) -> f64 {
        let (w1, w2) = self.eval(alpha, beta);
        let (s1, s2) = self.power_terms(alpha, beta);
        (w1.abs() / s1).max(w2.abs() / s2)
    }

    /// Scale at which a single part alone would sit on the `b = 0` Nehari manifold.
    fn part_scales(&self) -> (f64, f64) {
        let e = &self.eb;
        let expo = 1.0 / (self.p - 2.0);
        (
            ((self.a * e.a_plus + e.b_plus) / e.fdot_plus).powf(expo),
            ((self.a * e.a_minus + e.b_minus) / e.fdot_minus).powf(expo),
        )
    }

    /// `φ(α, β) = I_b(αu⁺ + βu⁻)` from the components.
    pub fn fibre_energy(&self, alpha: f64, beta: f64) -> f64 {
        let e = &self.eb;
        let g = alpha * alpha * e.a_plus + 2.0 * alpha * beta * e.cross + beta * beta * e.a_minus;
        0.5 * self.a * g + 0.25 * self.b * g * g
            + 0.5 * (alpha * alpha * e.b_plus + beta * beta * e.b_minus)
            - alpha.powf(self.p) * e.nl_plus
            - beta.powf(self.p) * e.nl_minus
    }
}

/// `(W_1 / (α^p ∫|u⁺|^p), W_2 / (β^p ∫|u⁻|^p))` in coordinates `(ln α, ln β)`.
///
/// The division removes the trivial zero at the origin, which would otherwise
/// attract Newton from below, and makes the values relative to the size of the
/// terms that cancel at the root. Positive zeros and face signs are those of `W`.
struct LogPairMap<'a>(&'a PairSystem);

impl BoxMap for LogPairMap<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (al, be) = (x[0].exp(), x[1].exp());
        let (w1, w2) = self.0.eval(al, be);
        let (s1, s2) = self.0.power_terms(al, be);
        vec![w1 / s1, w2 / s2]
    }

    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let (al, be) = (x[0].exp(), x[1].exp());
        let (w1, w2) = self.0.eval(al, be);
        let (s1, s2) = self.0.power_terms(al, be);
        let j = self.0.jacobian(al, be);
        let p = self.0.p;
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[
                (al * j[0][0] - p * w1) / s1,
                be * j[0][1] / s1,
                al * j[1][0] / s2,
                (be * j[1][1] - p * w2) / s2,
            ],
        ))
    }
}

/// `W(α, β)` for the field whose components are `eb`.
pub fn w_field(mp: &ModelParams, eb: &EnergyBreakdown, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::NonpositiveScaling { alpha, beta });
    }
    Ok(PairSystem::new(mp, eb).eval(alpha, beta))
}

/// Bracket `[r⁺, R⁺] × [r⁻, R⁻]` (log coordinates) with the Miranda face signs.
fn find_bracket(sys: &PairSystem, opts: &NehariOptions) -> Result<MirandaBox> {
    let (cp, cm) = sys.part_scales();
    let (mut r, mut big) = opts.initial_bracket;
    let map = LogPairMap(sys);
    for _ in 0..=opts.max_expansions {
        let bx = MirandaBox::new(
            vec![(cp * r).ln(), (cm * r).ln()],
            vec![(cp * big).ln(), (cm * big).ln()],
        )?;
        match check_face_signs(&map, &bx, opts.face_samples) {
            Ok(()) => return Ok(bx),
            Err(Error::FaceSignViolation { .. }) => {
                r /= opts.expansion_factor;
                big *= opts.expansion_factor;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::BracketFailure {
        expansions: opts.max_expansions,
    })
}

/// Solve `W(α, β) = 0` for the system of one field.
pub fn solve_pair(sys: &PairSystem, opts: &NehariOptions) -> Result<NehariPair> {
    let e = &sys.eb;
    if !(e.b_plus > 0.0 && e.b_minus > 0.0 && e.fdot_plus > 0.0 && e.fdot_minus > 0.0) {
        return Err(Error::DegenerateSplit {
            plus_zero: !(e.b_plus > 0.0 && e.fdot_plus > 0.0),
            minus_zero: !(e.b_minus > 0.0 && e.fdot_minus > 0.0),
        });
    }
    let log_box = find_bracket(sys, opts)?;
    let mopts = MirandaOptions {
        face_samples: opts.face_samples,
        ..MirandaOptions::default()
    };
    let sol = miranda_solve(&LogPairMap(sys), &log_box, opts.tol, &mopts)?;
    let bracket = MirandaBox::new(
        log_box.lower.iter().map(|x| x.exp()).collect(),
        log_box.upper.iter().map(|x| x.exp()).collect(),
    )?;

    // Polish in linear coordinates while the residual keeps dropping.
    let mut x = vec![sol.point[0].exp(), sol.point[1].exp()];
    let mut rel = sys.relative_residual(x[0], x[1]);
    let mut iters = sol.newton_iters;
    for _ in 0..6 {
        let Ok(step) = newton_step(sys, &x) else { break };
        let rn = sys.relative_residual(step[0], step[1]);
        if rn < rel && bracket.contains(&step) {
            x = step;
            rel = rn;
            iters += 1;
        } else {
            break;
        }
    }
    if rel > opts.tol {
        return Err(Error::NoConvergence {
            residual: rel,
            iterations: iters,
        });
    }
    let (w1, w2) = sys.eval(x[0], x[1]);
    Ok(NehariPair {
        alpha: x[0],
        beta: x[1],
        residual_norm: w1.abs().max(w2.abs()),
        relative_residual: rel,
        bracket,
        newton_iters: iters,
    })
}

fn newton_step(sys: &PairSystem, x: &[f64]) -> Result<Vec<f64>> {
    let j = sys.jacobian(x[0], x[1]);
    let (w1, w2) = sys.eval(x[0], x[1]);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det == 0.0 || !det.is_finite() {
        return Err(Error::NoConvergence {
            residual: w1.abs().max(w2.abs()),
            iterations: 0,
        });
    }
    let da = -(j[1][1] * w1 - j[0][1] * w2) / det;
    let db = -(-j[1][0] * w1 + j[0][0] * w2) / det;
    Ok(vec![x[0] + da, x[1] + db])
}

/// Pair projection of `u`: `(α, β)` with `αu⁺ + βu⁻` on the nodal Nehari set.
pub fn pair_project(pb: &Problem, u: &Field, opts: &NehariOptions) -> Result<NehariPair> {
    require_split(&positive_part(u), &negative_part(u))?;
    let eb = pb.components(u)?;
    solve_pair(&PairSystem::new(pb.params(), &eb), opts)
}

/// Data of the scalar fibre `t ↦ ⟨I_b'(tu), tu⟩ = t² g(t)` with
/// `g(t) = a S + b t² S² + B - t^{p-2} P`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarSystem {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    /// `G(u)`.
    pub s: f64,
    /// `∫ V u²`.
    pub v: f64,
    /// `∫ |u|^p`.
    pub power: f64,
}

impl ScalarSystem {
    pub fn g(&self, t: f64) -> f64 {
        self.a * self.s + self.b * t * t * self.s * self.s + self.v - t.powf(self.p - 2.0) * self.power
    }

    fn dg(&self, t: f64) -> f64 {
        2.0 * self.b * t * self.s * self.s - (self.p - 2.0) * t.powf(self.p - 3.0) * self.power
    }

    /// Root for `b = 0`: `((aS + B)/P)^{1/(p-2)}`.
    pub fn root_without_kirchhoff(&self) -> f64 {
        ((self.a * self.s + self.v) / self.power).powf(1.0 / (self.p - 2.0))
    }

    /// Unique positive root of `g`, to machine precision.
    pub fn root(&self) -> Result<f64> {
        if !(self.power > 0.0) || !(self.a * self.s + self.v > 0.0) {
            return Err(Error::ZeroField);
        }
        // g(t0) = b t0² S² >= 0 at the b = 0 root, so the root is >= t0.
        let mut lo = self.root_without_kirchhoff();
        if self.b == 0.0 || self.s == 0.0 {
            return Ok(lo);
        }
        let mut hi = 2.0 * lo;
        let mut guard = 0;
        while self.g(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::NoConvergence {
                    residual: self.g(hi),
                    iterations: guard,
                });
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let gt = self.g(t);
            if gt == 0.0 {
                return Ok(t);
            }
            if gt > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let d = self.dg(t);
            let newton = t - gt / d;
            let next = if d < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - t).abs() <= 4.0 * f64::EPSILON * t || hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            t = next;
        }
        Ok(t)
    }
}

/// `t > 0` with `tu` on the Nehari manifold.
pub fn scalar_project(pb: &Problem, u: &Field) -> Result<f64> {
    scalar_system(pb, u)?.root()
}

pub fn scalar_system(pb: &Problem, u: &Field) -> Result<ScalarSystem> {
    if u.is_zero() {
        return Err(Error::ZeroField);
    }
    let mp = pb.params();
    Ok(ScalarSystem {
        a: mp.a,
        b: mp.b,
        p: mp.p,
        s: pb.gagliardo(u)?,
        v: pb.weighted_l2(u, u)?,
        power: pb.nonlinear_work(u),
    })
}
