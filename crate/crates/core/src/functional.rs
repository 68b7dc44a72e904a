//! Kirchhoff energy, its derivative and the sign-split component quantities.
//!
//! With `G(u) = [u, u]` the discrete Gagliardo energy,
//!
//! ```text
//! I_b(u)         = a/2 G(u) + b/4 G(u)² + 1/2 ∫ V u² - ∫ F(u)
//! ⟨I_b'(u), φ⟩   = (a + b G(u)) [u, φ] + ∫ V u φ - ∫ f(u) φ
//! ```

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{negative_part, positive_part, Field, Grid};
use crate::kernel::{self, KernelMatrix};
use crate::model::{ModelParams, NonlinearitySpec, PotentialKind, PotentialSpec};

/// A model together with its discretization: grid, kernel and sampled potential.
#[derive(Debug, Clone)]
pub struct Problem {
    params: ModelParams,
    potential: PotentialSpec,
    nonlinearity: NonlinearitySpec,
    grid: Arc<Grid>,
    kernel: KernelMatrix,
    v: Vec<f64>,
}

impl Problem {
    /// Discretize with the exterior tail included.
    pub fn new(params: &ModelParams, potential: &PotentialSpec) -> Result<Self> {
        Self::with_tail(params, potential, true)
    }

    pub fn with_tail(params: &ModelParams, potential: &PotentialSpec, tail: bool) -> Result<Self> {
        if !(params.a > 0.0) || !(params.b >= 0.0) || !(params.p > 2.0) {
            return Err(Error::Precondition(format!(
                "need a > 0, b >= 0, p > 2 (got a={}, b={}, p={})",
                params.a, params.b, params.p
            )));
        }
        let grid = Arc::new(Grid::new(params.dim, params.grid_points, params.half_width)?);
        let kernel = KernelMatrix::new(&grid, params.s, tail)?;
        if potential.kind == PotentialKind::CustomTable
            && potential.table.as_ref().map(Vec::len) != Some(grid.len())
        {
            return Err(Error::Precondition(
                "custom-table potential must have one value per grid node".into(),
            ));
        }
        let v = (0..grid.len())
            .map(|k| potential.eval(&grid.node(k), k))
            .collect();
        Ok(Self {
            params: params.clone(),
            potential: potential.clone(),
            nonlinearity: NonlinearitySpec::pure_power(params.p),
            grid,
            kernel,
            v,
        })
    }

    /// Same discretization with a different Kirchhoff coefficient.
    pub fn with_b(&self, b: f64) -> Self {
        let mut out = self.clone();
        out.params.b = b;
        out
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    /// Potential sampled at the nodes.
    pub fn potential_values(&self) -> &[f64] {
        &self.v
    }

    pub fn field(&self, g: impl Fn(&[f64]) -> f64) -> Field {
        Field::from_fn(self.grid.clone(), g)
    }

    pub fn field_from_values(&self, values: Vec<f64>) -> Result<Field> {
        Field::new(self.grid.clone(), values)
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.len() != self.grid.len() || *u.grid().as_ref() != *self.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                found: u.len(),
            });
        }
        Ok(())
    }

    fn w(&self) -> f64 {
        self.grid.cell_measure()
    }

    /// `G(u) = [u, u]`.
    pub fn gagliardo(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        Ok(kernel::form(&self.kernel, u.values(), u.values()))
    }

    /// `[u, v]`.
    pub fn gagliardo_form(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(kernel::form(&self.kernel, u.values(), v.values()))
    }

    /// `∫ V u v`.
    pub fn weighted_l2(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.vdot(u.values(), v.values()))
    }

    fn vdot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.w()
            * u.iter()
                .zip(v)
                .zip(&self.v)
                .map(|((a, b), pot)| pot * a * b)
                .sum::<f64>()
    }

    /// `‖u‖²_H = G(u) + (1/a) ∫ V u²`.
    pub fn h_norm_sq(&self, u: &Field) -> Result<f64> {
        Ok(self.gagliardo(u)? + self.weighted_l2(u, u)? / self.params.a)
    }

    /// `‖u - v‖_H`.
    pub fn h_distance(&self, u: &Field, v: &Field) -> Result<f64> {
        u.check_same_grid(v)?;
        Ok(self.h_norm_sq(&(u - v))?.max(0.0).sqrt())
    }

    /// `∫ F(u)`.
    pub fn nonlinear_energy(&self, u: &Field) -> f64 {
        self.w() * u.values().iter().map(|&x| self.nonlinearity.F(x)).sum::<f64>()
    }

    /// `∫ u f(u) = ∫ |u|^p`.
    pub fn nonlinear_work(&self, u: &Field) -> f64 {
        self.w() * u.values().iter().map(|&x| self.nonlinearity.u_f(x)).sum::<f64>()
    }

    pub fn energy(&self, u: &Field) -> Result<f64> {
        let g = self.gagliardo(u)?;
        Ok(self.energy_from(g, self.weighted_l2(u, u)?, self.nonlinear_energy(u)))
    }

    fn energy_from(&self, g: f64, vu2: f64, nl: f64) -> f64 {
        let ModelParams { a, b, .. } = self.params;
        0.5 * a * g + 0.25 * b * g * g + 0.5 * vu2 - nl
    }

    /// `⟨I_b'(u), φ⟩`.
    pub fn pairing(&self, u: &Field, phi: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(phi)?;
        let lu = self.kernel.apply(u.values());
        let g = dot(&lu, u.values());
        let g_phi = dot(&lu, phi.values());
        let nl = self.w()
            * u.values()
                .iter()
                .zip(phi.values())
                .map(|(&x, &y)| self.nonlinearity.f(x) * y)
                .sum::<f64>();
        Ok((self.params.a + self.params.b * g) * g_phi + self.vdot(u.values(), phi.values()) - nl)
    }

    /// L² Riesz representative of `I_b'(u)`: `Σ_i r_i φ_i w = ⟨I_b'(u), φ⟩`.
    pub fn residual(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let lu = self.kernel.apply(u.values());
        let g = dot(&lu, u.values());
        Ok(Field::from_values_unchecked(
            self.grid.clone(),
            self.residual_from(u.values(), &lu, g),
        ))
    }

    pub(crate) fn residual_from(&self, u: &[f64], lu: &[f64], g: f64) -> Vec<f64> {
        let coef = (self.params.a + self.params.b * g) / self.w();
        u.iter()
            .zip(lu)
            .zip(&self.v)
            .map(|((&x, &l), &pot)| coef * l + pot * x - self.nonlinearity.f(x))
            .collect()
    }

    /// Energy and residual from one kernel application.
    pub fn evaluate(&self, u: &Field) -> Result<Evaluation> {
        self.check(u)?;
        let lu = self.kernel.apply(u.values());
        Ok(self.evaluate_with(u, &lu))
    }

    pub(crate) fn evaluate_with(&self, u: &Field, lu: &[f64]) -> Evaluation {
        let g = dot(lu, u.values());
        let energy = self.energy_from(g, self.vdot(u.values(), u.values()), self.nonlinear_energy(u));
        let residual = self.residual_from(u.values(), lu, g);
        let residual_inf = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        Evaluation {
            energy,
            gagliardo: g,
            residual: Field::from_values_unchecked(self.grid.clone(), residual),
            residual_inf,
        }
    }

    /// Sign-split quantities `A±, B±, C` and the nonlinear integrals of `u±`.
    pub fn components(&self, u: &Field) -> Result<EnergyBreakdown> {
        self.check(u)?;
        Ok(self.components_with_ops(u).0)
    }

    /// Components plus `L u⁺`, `L u⁻`, so that `L(αu⁺ + βu⁻)` needs no further
    /// kernel work.
    pub(crate) fn components_with_ops(&self, u: &Field) -> (EnergyBreakdown, SplitOps) {
        let (plus, minus) = kernel::split(u.values());
        let lp = self.kernel.apply(&plus);
        let lm = self.kernel.apply(&minus);
        // [u⁺, u⁻] with u⁺u⁻ = 0, so the tail drops out and this is C.
        let cross = dot(&lp, &minus);
        let w = self.w();
        let nl = &self.nonlinearity;
        let sum = |x: &[f64], g: &dyn Fn(f64) -> f64| w * x.iter().map(|&v| g(v)).sum::<f64>();
        let eb = EnergyBreakdown {
            a_plus: dot(&lp, &plus),
            a_minus: dot(&lm, &minus),
            b_plus: self.vdot(&plus, &plus),
            b_minus: self.vdot(&minus, &minus),
            cross,
            nl_plus: sum(&plus, &|v| nl.F(v)),
            nl_minus: sum(&minus, &|v| nl.F(v)),
            fdot_plus: sum(&plus, &|v| nl.u_f(v)),
            fdot_minus: sum(&minus, &|v| nl.u_f(v)),
        };
        let plus = Field::from_values_unchecked(self.grid.clone(), plus);
        let minus = Field::from_values_unchecked(self.grid.clone(), minus);
        (
            eb,
            SplitOps {
                plus,
                minus,
                l_plus: lp,
                l_minus: lm,
            },
        )
    }

    /// `I_b(u) - I_b(u⁺) - I_b(u⁻)` by direct subtraction.
    pub fn decomposition_excess(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let (p, n) = (positive_part(u), negative_part(u));
        require_split(&p, &n)?;
        Ok(self.energy(u)? - self.energy(&p)? - self.energy(&n)?)
    }

    /// Closed form of the excess, `a C + b/4 [(A⁺ + 2C + A⁻)² - (A⁺)² - (A⁻)²]`.
    pub fn decomposition_excess_closed(&self, eb: &EnergyBreakdown) -> f64 {
        let ModelParams { a, b, .. } = self.params;
        let g = eb.gagliardo();
        a * eb.cross + 0.25 * b * (g * g - eb.a_plus * eb.a_plus - eb.a_minus * eb.a_minus)
    }

    /// `⟨I_b'(u), u⁺⟩ - ⟨I_b'(u⁺), u⁺⟩ = a C + b [G(u)(A⁺ + C) - (A⁺)²]`.
    pub fn pairing_gap_plus(&self, eb: &EnergyBreakdown) -> f64 {
        let ModelParams { a, b, .. } = self.params;
        a * eb.cross + b * (eb.gagliardo() * (eb.a_plus + eb.cross) - eb.a_plus * eb.a_plus)
    }

    /// Mirror of [`Problem::pairing_gap_plus`] for the negative part.
    pub fn pairing_gap_minus(&self, eb: &EnergyBreakdown) -> f64 {
        let ModelParams { a, b, .. } = self.params;
        a * eb.cross + b * (eb.gagliardo() * (eb.a_minus + eb.cross) - eb.a_minus * eb.a_minus)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn require_split(plus: &Field, minus: &Field) -> Result<()> {
    let (pz, mz) = (plus.is_zero(), minus.is_zero());
    if pz || mz {
        Err(Error::DegenerateSplit {
            plus_zero: pz,
            minus_zero: mz,
        })
    } else {
        Ok(())
    }
}

/// Energy, `G` and residual of one field.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: f64,
    pub gagliardo: f64,
    pub residual: Field,
    pub residual_inf: f64,
}

/// Parts of a field and the form operator applied to each.
#[derive(Debug, Clone)]
pub(crate) struct SplitOps {
    pub plus: Field,
    pub minus: Field,
    pub l_plus: Vec<f64>,
    pub l_minus: Vec<f64>,
}

impl SplitOps {
    /// `αu⁺ + βu⁻` and its image under the form operator.
    pub fn recombine(&self, alpha: f64, beta: f64) -> (Field, Vec<f64>) {
        let field = self.plus.combine(alpha, &self.minus, beta);
        let lv = self
            .l_plus
            .iter()
            .zip(&self.l_minus)
            .map(|(p, m)| alpha * p + beta * m)
            .collect();
        (field, lv)
    }
}

/// Sign-split quantities of a field `u`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    /// `A⁺ = [u⁺, u⁺]`.
    pub a_plus: f64,
    /// `A⁻ = [u⁻, u⁻]`.
    pub a_minus: f64,
    /// `B⁺ = ∫ V (u⁺)²`.
    pub b_plus: f64,
    /// `B⁻ = ∫ V (u⁻)²`.
    pub b_minus: f64,
    /// `C = [u⁺, u⁻]` without tail.
    pub cross: f64,
    /// `∫ F(u⁺)`.
    pub nl_plus: f64,
    /// `∫ F(u⁻)`.
    pub nl_minus: f64,
    /// `∫ f(u⁺) u⁺`.
    pub fdot_plus: f64,
    /// `∫ f(u⁻) u⁻`.
    pub fdot_minus: f64,
}

impl EnergyBreakdown {
    /// `G(u) = A⁺ + 2C + A⁻`.
    pub fn gagliardo(&self) -> f64 {
        self.a_plus + 2.0 * self.cross + self.a_minus
    }

    pub fn is_sign_changing(&self) -> bool {
        self.b_plus > 0.0 && self.b_minus > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, l2_inner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(m: usize, b: f64) -> Problem {
        let mp = ModelParams {
            b,
            grid_points: m,
            half_width: 6.0,
            ..ModelParams::default()
        };
        Problem::new(&mp, &PotentialSpec::harmonic(1.0)).unwrap()
    }

    fn random_field(pb: &Problem, rng: &mut ChaCha8Rng) -> Field {
        let c1: f64 = rng.gen_range(-1.0..1.0);
        let c2: f64 = rng.gen_range(-1.0..1.0);
        let noise: Vec<f64> = (0..pb.grid().len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let smooth = pb.field(|x| (c1 + c2 * x[0]) * (-0.5 * x[0] * x[0]).exp());
        let vals = smooth.values().iter().zip(&noise).map(|(a, b)| a + b).collect();
        pb.field_from_values(vals).unwrap()
    }

    #[test]
    fn zero_field() {
        let pb = problem(32, 1.0);
        let z = Field::zeros(pb.grid().clone());
        assert_eq!(pb.energy(&z).unwrap(), 0.0);
        assert_eq!(pb.h_norm_sq(&z).unwrap(), 0.0);
        assert!(pb.residual(&z).unwrap().is_zero());
        let eb = pb.components(&z).unwrap();
        assert_eq!(eb, EnergyBreakdown::default());
        let phi = pb.field(|x| x[0].cos());
        assert_eq!(pb.pairing(&z, &phi).unwrap(), 0.0);
    }

    #[test]
    fn nonnegative_field_has_empty_negative_components() {
        let pb = problem(32, 1.0);
        let u = pb.field(|x| (-x[0] * x[0]).exp());
        let eb = pb.components(&u).unwrap();
        assert_eq!(eb.a_minus, 0.0);
        assert_eq!(eb.b_minus, 0.0);
        assert_eq!(eb.cross, 0.0);
        assert_eq!(eb.nl_minus, 0.0);
        assert_eq!(eb.fdot_minus, 0.0);
        assert!(eb.a_plus > 0.0 && eb.b_plus > 0.0);
    }

    #[test]
    fn h_norm_unit_weights() {
        let mp = ModelParams {
            grid_points: 32,
            half_width: 4.0,
            ..ModelParams::default()
        };
        let pb = Problem::new(&mp, &PotentialSpec::constant(1.0)).unwrap();
        let u = pb.field(|x| (-x[0] * x[0]).exp());
        let u2 = integrate(pb.grid(), &u.map(|v| v * v));
        let expect = pb.gagliardo(&u).unwrap() + u2;
        assert!((pb.h_norm_sq(&u).unwrap() - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn h_norm_is_quadratic() {
        let pb = problem(48, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_field(&pb, &mut rng);
        let n1 = pb.h_norm_sq(&u).unwrap();
        let n3 = pb.h_norm_sq(&u.scale(3.0)).unwrap();
        assert!((n3 - 9.0 * n1).abs() <= 1e-13 * n3);
    }

    #[test]
    fn b_zero_energy_drops_quartic() {
        let pb0 = problem(32, 0.0);
        let pb1 = problem(32, 1.0);
        let u = pb0.field(|x| x[0] * (-x[0] * x[0]).exp());
        let g = pb0.gagliardo(&u).unwrap();
        let e0 = pb0.energy(&u).unwrap();
        let e1 = pb1.energy(&u).unwrap();
        assert!((e1 - e0 - 0.25 * g * g).abs() <= 1e-14 * e1.abs().max(1.0));
    }

    #[test]
    fn small_bump_is_quadratic() {
        let pb = problem(64, 1.0);
        let phi = pb.field(|x| (-x[0] * x[0]).exp());
        let eps = 1e-4;
        let u = phi.scale(eps);
        let quad = 0.5
            * eps
            * eps
            * (pb.params().a * pb.gagliardo(&phi).unwrap() + pb.weighted_l2(&phi, &phi).unwrap());
        let e = pb.energy(&u).unwrap();
        assert!(((e - quad) / quad).abs() <= 1e-6);
    }

    #[test]
    fn pairing_is_linear_in_direction() {
        let pb = problem(40, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(&pb, &mut rng);
        let p1 = random_field(&pb, &mut rng);
        let p2 = random_field(&pb, &mut rng);
        let sum = pb.pairing(&u, &(&p1 + &p2)).unwrap();
        let parts = pb.pairing(&u, &p1).unwrap() + pb.pairing(&u, &p2).unwrap();
        assert!((sum - parts).abs() <= 1e-13 * sum.abs().max(1.0));
    }

    #[test]
    fn pairing_matches_central_difference() {
        let pb = problem(48, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = 1e-6;
        for _ in 0..5 {
            let u = random_field(&pb, &mut rng);
            let phi = random_field(&pb, &mut rng);
            let fd = (pb.energy(&u.combine(1.0, &phi, t)).unwrap()
                - pb.energy(&u.combine(1.0, &phi, -t)).unwrap())
                / (2.0 * t);
            let an = pb.pairing(&u, &phi).unwrap();
            assert!(((fd - an) / an).abs() <= 1e-5, "{fd} vs {an}");
        }
    }

    #[test]
    fn residual_represents_pairing() {
        let pb = problem(48, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = random_field(&pb, &mut rng);
        let r = pb.residual(&u).unwrap();
        for _ in 0..5 {
            let phi = random_field(&pb, &mut rng);
            let lhs = l2_inner(&r, &phi);
            let rhs = pb.pairing(&u, &phi).unwrap();
            assert!(((lhs - rhs) / rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn excess_with_b_zero_is_a_times_cross() {
        let pb = problem(40, 0.0);
        let u = pb.field(|x| x[0] * (-x[0] * x[0]).exp());
        let eb = pb.components(&u).unwrap();
        let ex = pb.decomposition_excess(&u).unwrap();
        assert!((ex - pb.params().a * eb.cross).abs() <= 1e-12 * ex);
        assert!(ex > 0.0);
    }

    #[test]
    fn excess_closed_form_and_gaps() {
        let pb = problem(64, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let u = random_field(&pb, &mut rng);
            let eb = pb.components(&u).unwrap();
            let direct = pb.decomposition_excess(&u).unwrap();
            let closed = pb.decomposition_excess_closed(&eb);
            assert!(direct > 0.0);
            assert!(((direct - closed) / closed).abs() <= 1e-12);

            let p = positive_part(&u);
            let gap = pb.pairing(&u, &p).unwrap() - pb.pairing(&p, &p).unwrap();
            let closed_gap = pb.pairing_gap_plus(&eb);
            assert!(closed_gap > 0.0);
            assert!(((gap - closed_gap) / closed_gap).abs() <= 1e-11);
            let n = negative_part(&u);
            let gap_m = pb.pairing(&u, &n).unwrap() - pb.pairing(&n, &n).unwrap();
            assert!(((gap_m - pb.pairing_gap_minus(&eb)) / gap_m).abs() <= 1e-11);
        }
    }

    #[test]
    fn excess_requires_both_parts() {
        let pb = problem(32, 1.0);
        let u = pb.field(|x| (-x[0] * x[0]).exp());
        assert!(matches!(
            pb.decomposition_excess(&u),
            Err(Error::DegenerateSplit {
                plus_zero: false,
                minus_zero: true
            })
        ));
    }

    #[test]
    fn split_ops_recombine() {
        let pb = problem(40, 1.0);
        let u = pb.field(|x| x[0] * (-x[0] * x[0]).exp());
        let (_, ops) = pb.components_with_ops(&u);
        let (v, lv) = ops.recombine(0.7, 1.9);
        let direct = pb.kernel().apply(v.values());
        for (a, b) in lv.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn evaluation_matches_separate_calls() {
        let pb = problem(40, 1.0);
        let u = pb.field(|x| x[0] * (-x[0] * x[0]).exp());
        let ev = pb.evaluate(&u).unwrap();
        assert_eq!(ev.energy, pb.energy(&u).unwrap());
        assert_eq!(ev.residual, pb.residual(&u).unwrap());
    }

    #[test]
    fn grid_mismatch() {
        let pb = problem(32, 1.0);
        let other = problem(16, 1.0);
        let u = other.field(|x| x[0]);
        assert!(matches!(pb.energy(&u), Err(Error::GridMismatch { .. })));
    }
}
