//! Dense discretization of the Gagliardo double integral
//!
//! ```text
//! [u, v] = ∬ (u(x) - u(y)) (v(x) - v(y)) / |x - y|^{N+2s} dx dy
//! ```
//!
//! for piecewise-constant fields on a cell-centred grid, zero outside the box.
//! Off-diagonal cell pairs use the midpoint rule `K_ij = w² / |x_i - x_j|^{N+2s}`
//! (`w` the cell measure). The same-cell singular part is dropped, which costs an
//! `O(h^{2-2s})` bias. Pairs with one point outside the box reduce to
//! `2 Σ_i T_i u_i v_i` where `T_i` integrates the kernel over the exterior.
//!
//! On a uniform grid `K_ij` depends only on the offset between the two nodes, so
//! the matrix is stored as one table indexed by `|i - j|` per axis.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Nodes per row chunk when the matvec runs in parallel.
const PAR_MIN_NODES: usize = 512;

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    dim: usize,
    m: usize,
    len: usize,
    s: f64,
    /// `K` by per-axis absolute offset, row-major over `[0, M)^dim`; entry 0 is 0.
    offsets: Vec<f64>,
    /// `d_i = Σ_j K_ij`.
    row_sums: Vec<f64>,
    /// Exterior weights `T_i`.
    tail: Vec<f64>,
}

impl KernelMatrix {
    /// Assemble for fractional order `s` on `grid`, with or without the exterior tail.
    pub fn new(grid: &Grid, s: f64, with_tail: bool) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Precondition(format!("fractional order {s} not in (0,1)")));
        }
        let dim = grid.dim();
        let m = grid.points_per_axis();
        let len = grid.len();
        let h = grid.spacing();
        let w = grid.cell_measure();
        let expo = dim as f64 + 2.0 * s;

        let mut offsets = vec![0.0; len];
        let mut idx = vec![0usize; dim];
        for (k, entry) in offsets.iter_mut().enumerate().skip(1) {
            grid.multi_index(k, &mut idx);
            let r2: f64 = idx.iter().map(|&i| (i as f64 * h).powi(2)).sum();
            *entry = w * w / r2.powf(0.5 * expo);
        }

        let mut kernel = Self {
            dim,
            m,
            len,
            s,
            offsets,
            row_sums: Vec::new(),
            tail: vec![0.0; len],
        };
        let ones = vec![1.0; len];
        kernel.row_sums = kernel.apply_k(&ones);

        if with_tail {
            let l = grid.half_width();
            let c = half_space_constant(dim, s);
            kernel.tail = (0..len)
                .map(|k| {
                    let x = grid.node(k);
                    let sum: f64 = x
                        .iter()
                        .map(|&xi| (l - xi).powf(-2.0 * s) + (l + xi).powf(-2.0 * s))
                        .sum();
                    w * c * sum / (2.0 * s)
                })
                .collect();
        }
        Ok(kernel)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn tail_weights(&self) -> &[f64] {
        &self.tail
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// `K_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.offsets[self.offset_index(i, j)]
    }

    fn offset_index(&self, i: usize, j: usize) -> usize {
        let m = self.m;
        let (mut a, mut b) = (i, j);
        let mut idx = 0;
        let mut place = 1;
        for _ in 0..self.dim {
            let (ai, bi) = (a % m, b % m);
            idx += ai.abs_diff(bi) * place;
            place *= m;
            a /= m;
            b /= m;
        }
        idx
    }

    fn row_dot(&self, i: usize, u: &[f64]) -> f64 {
        if self.dim == 1 {
            // Toeplitz row: K_ij = t[|i - j|].
            let t = &self.offsets;
            let left: f64 = u[..i].iter().rev().zip(&t[1..]).map(|(a, b)| a * b).sum();
            let right: f64 = u[i + 1..].iter().zip(&t[1..]).map(|(a, b)| a * b).sum();
            left + right
        } else {
            (0..self.len)
                .map(|j| self.offsets[self.offset_index(i, j)] * u[j])
                .sum()
        }
    }

    /// `Σ_j K_ij (u_i - u_j)`, summed in difference form so that smooth fields
    /// do not lose digits to cancellation.
    fn row_diff(&self, i: usize, u: &[f64]) -> f64 {
        let ui = u[i];
        if self.dim == 1 {
            let t = &self.offsets;
            let left: f64 = u[..i].iter().rev().zip(&t[1..]).map(|(a, b)| b * (ui - a)).sum();
            let right: f64 = u[i + 1..].iter().zip(&t[1..]).map(|(a, b)| b * (ui - a)).sum();
            left + right
        } else {
            (0..self.len)
                .map(|j| self.offsets[self.offset_index(i, j)] * (ui - u[j]))
                .sum()
        }
    }

    fn map_rows(&self, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
        if self.len >= PAR_MIN_NODES {
            (0..self.len).into_par_iter().map(f).collect()
        } else {
            (0..self.len).map(f).collect()
        }
    }

    /// `K u`.
    pub fn apply_k(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.len);
        self.map_rows(|i| self.row_dot(i, u))
    }

    /// Operator of the form: `(L u)_i = 2[Σ_j K_ij (u_i - u_j) + T_i u_i]`, so
    /// that `gagliardo_form(u, v) = Σ_i v_i (L u)_i`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.len);
        self.map_rows(|i| 2.0 * (self.row_diff(i, u) + self.tail[i] * u[i]))
    }

    /// Form evaluated directly over ordered pairs. Quadratic in the number of
    /// nodes with no reuse; kept as a reference for the operator route.
    pub fn form_by_pairs(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len {
            for j in 0..self.len {
                if i != j {
                    acc += self.entry(i, j) * (u[i] - u[j]) * (v[i] - v[j]);
                }
            }
            acc += 2.0 * self.tail[i] * u[i] * v[i];
        }
        acc
    }
}

/// `∫_{y_1 > d} |x - y|^{-N-2s} dy = c_{N,s} d^{-2s} / (2s)` with
/// `c_{N,s} = π^{(N-1)/2} Γ(s + 1/2) / Γ(s + N/2)`; `c = 1` in one dimension.
///
/// Summing the half-spaces beyond each face counts the corner regions more than
/// once, so for `N >= 2` the tail is an upper bound.
pub fn half_space_constant(dim: usize, s: f64) -> f64 {
    if dim == 1 {
        return 1.0;
    }
    use statrs::function::gamma::gamma;
    let n = dim as f64;
    std::f64::consts::PI.powf(0.5 * (n - 1.0)) * gamma(s + 0.5) / gamma(s + 0.5 * n)
}

fn check(k: &KernelMatrix, u: &Field) -> Result<()> {
    if u.len() != k.len() {
        return Err(Error::GridMismatch {
            expected: k.len(),
            found: u.len(),
        });
    }
    Ok(())
}

/// `Σ_{i≠j} K_ij (u_i - u_j)(v_i - v_j) + 2 Σ_i T_i u_i v_i`.
pub fn gagliardo_form(k: &KernelMatrix, u: &Field, v: &Field) -> Result<f64> {
    check(k, u)?;
    check(k, v)?;
    u.check_same_grid(v)?;
    Ok(form(k, u.values(), v.values()))
}

pub(crate) fn form(k: &KernelMatrix, u: &[f64], v: &[f64]) -> f64 {
    let lu = k.apply(u);
    lu.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `Σ_{i≠j} K_ij (u⁺_i - u⁺_j)(u⁻_i - u⁻_j)`, nonnegative.
///
/// The tail contributes nothing since `u⁺ u⁻ = 0` pointwise, and the diagonal
/// part of the expanded sum vanishes for the same reason, leaving `-2 u⁺·K u⁻`,
/// a sum of nonnegative terms.
pub fn cross_term(k: &KernelMatrix, u: &Field) -> Result<f64> {
    check(k, u)?;
    let (plus, minus) = split(u.values());
    Ok(cross(k, &plus, &minus))
}

pub(crate) fn cross(k: &KernelMatrix, plus: &[f64], minus: &[f64]) -> f64 {
    let km = k.apply_k(minus);
    -2.0 * plus.iter().zip(&km).map(|(a, b)| a * b).sum::<f64>()
}

pub(crate) fn split(u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    u.iter()
        .map(|&v| if v > 0.0 { (v, 0.0) } else { (0.0, v.min(0.0)) })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{negative_part, positive_part};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn two_node() -> (Arc<Grid>, KernelMatrix) {
        // L = 1, M = 2: h = 1, nodes at ±1/2, w = 1.
        let g = Arc::new(Grid::new(1, 2, 1.0).unwrap());
        let k = KernelMatrix::new(&g, 0.5, false).unwrap();
        (g, k)
    }

    fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
        let vals = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::new(g.clone(), vals).unwrap()
    }

    #[test]
    fn two_node_examples() {
        let (g, k) = two_node();
        assert_eq!(k.entry(0, 1), 1.0);
        let u = Field::new(g.clone(), vec![0.0, 1.0]).unwrap();
        assert_eq!(gagliardo_form(&k, &u, &u).unwrap(), 2.0);
        let v = Field::new(g.clone(), vec![1.0, -1.0]).unwrap();
        assert_eq!(cross_term(&k, &v).unwrap(), 2.0);
        let zero = Field::zeros(g);
        assert_eq!(gagliardo_form(&k, &zero, &v).unwrap(), 0.0);
    }

    #[test]
    fn operator_matches_pair_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (dim, m) in [(1, 33), (2, 7)] {
            let g = Arc::new(Grid::new(dim, m, 3.0).unwrap());
            let k = KernelMatrix::new(&g, 0.3, true).unwrap();
            let u = random_field(&g, &mut rng);
            let v = random_field(&g, &mut rng);
            let a = gagliardo_form(&k, &u, &v).unwrap();
            let b = k.form_by_pairs(u.values(), v.values());
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn symmetric_and_entries_valid() {
        let g = Arc::new(Grid::new(1, 16, 2.0).unwrap());
        let k = KernelMatrix::new(&g, 0.5, true).unwrap();
        for i in 0..16 {
            assert_eq!(k.entry(i, i), 0.0);
            assert!(k.tail_weights()[i] > 0.0);
            for j in 0..16 {
                assert_eq!(k.entry(i, j), k.entry(j, i));
                assert!(k.entry(i, j) >= 0.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&g, &mut rng);
        let v = random_field(&g, &mut rng);
        let uv = gagliardo_form(&k, &u, &v).unwrap();
        let vu = gagliardo_form(&k, &v, &u).unwrap();
        assert!((uv - vu).abs() <= 1e-13 * uv.abs().max(1.0));
    }

    #[test]
    fn tail_closed_form_1d() {
        let g = Grid::new(1, 8, 2.0).unwrap();
        let s = 0.25;
        let k = KernelMatrix::new(&g, s, true).unwrap();
        let w = g.cell_measure();
        for (i, &x) in g.axis().iter().enumerate() {
            let t = w * ((2.0 - x).powf(-2.0 * s) + (2.0 + x).powf(-2.0 * s)) / (2.0 * s);
            assert!((k.tail_weights()[i] - t).abs() <= 1e-15 * t);
        }
    }

    #[test]
    fn tail_removes_constants_from_kernel() {
        let g = Arc::new(Grid::new(1, 32, 4.0).unwrap());
        let one = Field::from_fn(g.clone(), |_| 1.0);
        let no_tail = KernelMatrix::new(&g, 0.5, false).unwrap();
        assert!(gagliardo_form(&no_tail, &one, &one).unwrap().abs() < 1e-10);
        let with_tail = KernelMatrix::new(&g, 0.5, true).unwrap();
        assert!(gagliardo_form(&with_tail, &one, &one).unwrap() > 0.1);
    }

    #[test]
    fn half_space_constant_2d() {
        // c_{2,s} = √π Γ(s+1/2)/Γ(s+1); for s = 1/2 this is √π / Γ(3/2) = 2.
        assert!((half_space_constant(2, 0.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sign_split_identity_and_cross_positivity() {
        let g = Arc::new(Grid::new(1, 64, 5.0).unwrap());
        let k = KernelMatrix::new(&g, 0.5, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = random_field(&g, &mut rng);
            let (p, n) = (positive_part(&u), negative_part(&u));
            let whole = gagliardo_form(&k, &u, &u).unwrap();
            let ap = gagliardo_form(&k, &p, &p).unwrap();
            let am = gagliardo_form(&k, &n, &n).unwrap();
            let c = cross_term(&k, &u).unwrap();
            assert!(c > 0.0);
            assert!((whole - (ap + 2.0 * c + am)).abs() <= 1e-12 * whole);
        }
    }

    #[test]
    fn cross_is_quadratic() {
        let g = Arc::new(Grid::new(1, 40, 3.0).unwrap());
        let k = KernelMatrix::new(&g, 0.7, true).unwrap();
        let u = Field::from_fn(g.clone(), |x| x[0] * (-x[0] * x[0]).exp());
        let c1 = cross_term(&k, &u).unwrap();
        let c2 = cross_term(&k, &u.scale(2.0)).unwrap();
        assert!((c2 - 4.0 * c1).abs() <= 1e-13 * c2);
    }

    #[test]
    fn single_signed_has_no_cross() {
        let g = Arc::new(Grid::new(1, 40, 3.0).unwrap());
        let k = KernelMatrix::new(&g, 0.5, true).unwrap();
        let u = Field::from_fn(g, |x| (-x[0] * x[0]).exp());
        assert_eq!(cross_term(&k, &u).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_reported() {
        let g = Arc::new(Grid::new(1, 8, 1.0).unwrap());
        let k = KernelMatrix::new(&g, 0.5, true).unwrap();
        let other = Field::zeros(Arc::new(Grid::new(1, 9, 1.0).unwrap()));
        assert!(matches!(
            gagliardo_form(&k, &other, &other),
            Err(Error::GridMismatch { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn form_is_positive_definite(vals in proptest::collection::vec(-2.0f64..2.0, 12)) {
                let g = Arc::new(Grid::new(1, 12, 2.0).unwrap());
                let k = KernelMatrix::new(&g, 0.4, true).unwrap();
                let u = Field::new(g, vals).unwrap();
                let q = gagliardo_form(&k, &u, &u).unwrap();
                if u.is_zero() {
                    prop_assert_eq!(q, 0.0);
                } else {
                    prop_assert!(q > 0.0);
                }
            }
        }
    }
}
