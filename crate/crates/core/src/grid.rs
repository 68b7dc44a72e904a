//! Truncated uniform grid, grid functions and the midpoint quadrature.

use std::fmt::Write as _;
use std::io::Write as _;
use std::ops::{Add, Mul, Sub};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Cell-centred tensor grid on `[-L, L]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    half_width: f64,
    spacing: f64,
    axis: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64) -> Result<Self> {
        if dim == 0 || points_per_axis < 2 || !(half_width > 0.0) {
            return Err(Error::Precondition(format!(
                "grid needs dim >= 1, M >= 2, L > 0 (got dim={dim}, M={points_per_axis}, L={half_width})"
            )));
        }
        if points_per_axis.checked_pow(dim as u32).is_none() {
            return Err(Error::Precondition("grid too large".into()));
        }
        let spacing = 2.0 * half_width / points_per_axis as f64;
        let axis = (0..points_per_axis)
            .map(|i| -half_width + (i as f64 + 0.5) * spacing)
            .collect();
        Ok(Self {
            dim,
            points_per_axis,
            half_width,
            spacing,
            axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Cell centres along one axis.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// `h^dim`.
    pub fn cell_measure(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Total number of nodes `M^dim`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis indices of a flat (row-major) node index.
    pub fn multi_index(&self, node: usize, out: &mut [usize]) {
        let m = self.points_per_axis;
        let mut rem = node;
        for d in (0..self.dim).rev() {
            out[d] = rem % m;
            rem /= m;
        }
    }

    /// Coordinates of a node.
    pub fn node(&self, node: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        self.multi_index(node, &mut idx);
        idx.iter().map(|&i| self.axis[i]).collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }
}

/// A grid function, extended by zero outside the box.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("field has non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Sample `g` at every node.
    pub fn from_fn(grid: Arc<Grid>, g: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.nodes().map(|x| g(&x)).collect();
        Self { grid, values }
    }

    pub(crate) fn from_values_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.len(),
                found: other.len(),
            })
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    pub fn scale(&self, lambda: f64) -> Field {
        self.map(|v| lambda * v)
    }

    /// `alpha·self + beta·other`.
    pub fn combine(&self, alpha: f64, other: &Field, beta: f64) -> Field {
        debug_assert!(self.same_grid(other));
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&u, &v)| alpha * u + beta * v)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Grid dump: one `x u` line per node (`x y u` in 2D), 17 significant digits.
    pub fn to_dump(&self) -> String {
        let mut out = String::with_capacity(self.len() * 48);
        for (k, u) in self.values.iter().enumerate() {
            for x in self.grid.node(k) {
                let _ = write!(out, "{x:.16e} ");
            }
            let _ = writeln!(out, "{u:.16e}");
        }
        out
    }

    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_dump().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Parse a dump written by [`Field::to_dump`] onto `grid`.
    pub fn parse_dump(grid: Arc<Grid>, text: &str) -> Result<Self> {
        let cols = grid.dim() + 1;
        let mut values = Vec::with_capacity(grid.len());
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != cols {
                return Err(Error::Config(format!(
                    "dump line {}: expected {cols} columns, found {}",
                    lineno + 1,
                    parts.len()
                )));
            }
            let u: f64 = parts[cols - 1]
                .parse()
                .map_err(|e| Error::Config(format!("dump line {}: {e}", lineno + 1)))?;
            values.push(u);
        }
        Field::new(grid, values)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.combine(1.0, rhs, 1.0)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.combine(1.0, rhs, -1.0)
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        rhs.scale(self)
    }
}

/// Midpoint rule: `h^dim · Σ g_i`.
pub fn integrate(grid: &Grid, g: &Field) -> f64 {
    grid.cell_measure() * g.values().iter().sum::<f64>()
}

/// `h^dim · Σ u_i v_i`.
pub fn l2_inner(u: &Field, v: &Field) -> f64 {
    u.grid().cell_measure()
        * u.values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

/// `u⁺ = max(u, 0)`.
pub fn positive_part(u: &Field) -> Field {
    u.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// `u⁻ = min(u, 0)`.
pub fn negative_part(u: &Field) -> Field {
    u.map(|v| if v < 0.0 { v } else { 0.0 })
}

/// Number of sign changes between neighbouring nodes along each axis,
/// ignoring nodes with `|u| <= floor·max|u|`.
pub fn sign_changes(u: &Field, floor: f64) -> usize {
    let grid = u.grid();
    let m = grid.points_per_axis();
    let cutoff = floor * u.max_abs();
    let vals = u.values();
    let sign = |v: f64| {
        if v.abs() <= cutoff {
            0i8
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let mut count = 0;
    let lines = grid.len() / m;
    for d in 0..grid.dim() {
        let stride = m.pow((grid.dim() - 1 - d) as u32);
        for line in 0..lines {
            // Start node of this line: all indices except axis d taken from `line`.
            let outer = line / stride;
            let inner = line % stride;
            let start = outer * stride * m + inner;
            let mut last = 0i8;
            for k in 0..m {
                let sg = sign(vals[start + k * stride]);
                if sg != 0 {
                    if last != 0 && sg != last {
                        count += 1;
                    }
                    last = sg;
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(m: usize, l: f64) -> Arc<Grid> {
        Arc::new(Grid::new(1, m, l).unwrap())
    }

    #[test]
    fn nodes_are_cell_centres() {
        let g = Grid::new(1, 8, 2.0).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert!((g.spacing() * 8.0 - 4.0).abs() <= f64::EPSILON * 4.0);
        assert_eq!(g.axis()[0], -1.75);
        assert_eq!(g.axis()[7], 1.75);
        assert!(g.axis().iter().all(|&x| x > -2.0 && x < 2.0));
        for (i, x) in g.axis().iter().enumerate() {
            assert_eq!(*x, -g.axis()[7 - i]);
        }
    }

    #[test]
    fn grid_2d_layout() {
        let g = Grid::new(2, 4, 1.0).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.cell_measure(), 0.25);
        assert_eq!(g.node(1), vec![-0.75, -0.25]);
        assert_eq!(g.node(4), vec![-0.25, -0.75]);
    }

    #[test]
    fn quadrature_examples() {
        let g = grid1(64, 3.0);
        let one = Field::from_fn(g.clone(), |_| 1.0);
        assert!((integrate(&g, &one) - 6.0).abs() < 1e-13);
        assert_eq!(integrate(&g, &Field::zeros(g.clone())), 0.0);
        let odd = Field::from_fn(g.clone(), |x| x[0]);
        assert!(integrate(&g, &odd).abs() < 1e-13);
    }

    #[test]
    fn sign_split() {
        let g = grid1(3, 1.0);
        let u = Field::new(g, vec![1.0, -2.0, 0.0]).unwrap();
        assert_eq!(positive_part(&u).values(), &[1.0, 0.0, 0.0]);
        assert_eq!(negative_part(&u).values(), &[0.0, -2.0, 0.0]);
        let nonneg = u.map(f64::abs);
        assert!(negative_part(&nonneg).is_zero());
    }

    #[test]
    fn length_mismatch_rejected() {
        let g = grid1(4, 1.0);
        assert!(matches!(
            Field::new(g, vec![0.0; 5]),
            Err(Error::GridMismatch { expected: 4, found: 5 })
        ));
    }

    #[test]
    fn counts_sign_changes() {
        let g = grid1(6, 1.0);
        let u = Field::new(g.clone(), vec![1.0, 2.0, -1.0, 0.0, -3.0, 1.0]).unwrap();
        assert_eq!(sign_changes(&u, 0.0), 2);
        let g2 = Arc::new(Grid::new(2, 4, 1.0).unwrap());
        let v = Field::from_fn(g2, |x| x[0]);
        // each of the 4 lines along axis 0 crosses zero once
        assert_eq!(sign_changes(&v, 0.0), 4);
    }

    #[test]
    fn dump_round_trip() {
        let g = grid1(16, 2.0);
        let u = Field::from_fn(g.clone(), |x| (x[0] * 1.3).sin() / 3.0);
        let back = Field::parse_dump(g, &u.to_dump()).unwrap();
        assert_eq!(back.values(), u.values());
        let first = u.to_dump().lines().next().unwrap().to_string();
        assert_eq!(first.split(' ').count(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_reconstructs(vals in proptest::collection::vec(-5.0f64..5.0, 8)) {
                let g = grid1(8, 1.0);
                let u = Field::new(g, vals).unwrap();
                let (p, n) = (positive_part(&u), negative_part(&u));
                for k in 0..u.len() {
                    prop_assert_eq!(p.values()[k] + n.values()[k], u.values()[k]);
                    prop_assert_eq!(p.values()[k] * n.values()[k], 0.0);
                }
            }
        }
    }
}
