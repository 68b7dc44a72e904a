//! Zeros of continuous maps on boxes under Poincaré–Miranda sign conditions.
//!
//! If `F_i >= 0` on the face `x_i = lower_i` and `F_i <= 0` on the face
//! `x_i = upper_i` for every axis `i`, then `F` vanishes somewhere in the box.
//! [`miranda_solve`] checks the face signs on a sample lattice, bisects the box
//! while the sign pattern survives on one half, and finishes with damped Newton
//! from the midpoint of the last box.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Axis-aligned box `Π [lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MirandaBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl MirandaBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Precondition("box bounds must be nonempty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Precondition(format!(
                "box needs lower < upper on every axis: {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(xi, (l, u))| *xi >= *l && *xi <= *u)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (xi, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *xi = xi.clamp(*l, *u);
        }
    }

    fn longest_axis(&self) -> usize {
        (0..self.dim())
            .fold((0, f64::NEG_INFINITY), |(best, w), i| {
                let wi = self.width(i);
                if wi > w {
                    (i, wi)
                } else {
                    (best, w)
                }
            })
            .0
    }
}

/// Continuous map `ℝ^n → ℝ^n`.
pub trait BoxMap {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Vec<f64>;

    /// Row-major Jacobian if available; finite differences otherwise.
    fn jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Adapter for closures, Jacobian by finite differences.
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnMap<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> BoxMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

#[derive(Debug, Clone)]
pub struct MirandaOptions {
    /// Lattice points per face edge.
    pub face_samples: usize,
    /// Bisection stops once every side is below this fraction of the starting width.
    pub min_relative_width: f64,
    pub max_depth: usize,
    pub newton_max: usize,
    pub max_halvings: usize,
}

impl Default for MirandaOptions {
    fn default() -> Self {
        Self {
            face_samples: 33,
            min_relative_width: 1e-4,
            max_depth: 200,
            newton_max: 100,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MirandaSolution {
    pub point: Vec<f64>,
    pub residual: f64,
    pub bisections: usize,
    pub newton_iters: usize,
    /// Box in which Newton was started.
    pub final_box: MirandaBox,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Lattice on the face `x_axis = value` restricted to `bx`, `samples` points per edge.
fn face_points(bx: &MirandaBox, axis: usize, value: f64, samples: usize) -> Vec<Vec<f64>> {
    let n = bx.dim();
    let free: Vec<usize> = (0..n).filter(|&d| d != axis).collect();
    let count = samples.pow(free.len() as u32);
    let denom = (samples.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut x = vec![0.0; n];
        x[axis] = value;
        let mut rem = k;
        for &d in &free {
            let j = rem % samples;
            rem /= samples;
            let t = if samples == 1 { 0.5 } else { j as f64 / denom };
            x[d] = bx.lower[d] + t * bx.width(d);
        }
        out.push(x);
    }
    out
}

/// Check `F_i >= 0` on `x_i = lower_i` and `F_i <= 0` on `x_i = upper_i` at
/// every lattice point.
pub fn check_face_signs<M: BoxMap + ?Sized>(map: &M, bx: &MirandaBox, samples: usize) -> Result<()> {
    for axis in 0..bx.dim() {
        for (face, value, want_nonneg) in [("lower", bx.lower[axis], true), ("upper", bx.upper[axis], false)] {
            for x in face_points(bx, axis, value, samples) {
                let fx = map.eval(&x)[axis];
                let ok = if want_nonneg { fx >= 0.0 } else { fx <= 0.0 };
                if !ok {
                    return Err(Error::FaceSignViolation {
                        axis,
                        face,
                        point: x,
                        value: fx,
                    });
                }
            }
        }
    }
    Ok(())
}

fn face_sign(map: &(impl BoxMap + ?Sized), bx: &MirandaBox, axis: usize, value: f64, samples: usize) -> (bool, bool) {
    let mut all_nonpos = true;
    let mut all_nonneg = true;
    for x in face_points(bx, axis, value, samples) {
        let fx = map.eval(&x)[axis];
        all_nonpos &= fx <= 0.0;
        all_nonneg &= fx >= 0.0;
        if !all_nonpos && !all_nonneg {
            break;
        }
    }
    (all_nonpos, all_nonneg)
}

/// Central finite-difference Jacobian.
pub fn fd_jacobian<M: BoxMap + ?Sized>(map: &M, x: &[f64]) -> DMatrix<f64> {
    let n = map.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let fp = map.eval(&xp);
        xp[j] = x[j] - step;
        let fm = map.eval(&xp);
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Damped Newton from `x0`, iterates clamped to `bx`. Each accepted step must
/// reduce `max|F|`; the step is halved up to `max_halvings` times.
pub fn damped_newton<M: BoxMap + ?Sized>(
    map: &M,
    x0: Vec<f64>,
    bx: &MirandaBox,
    tol: f64,
    opts: &MirandaOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let mut x = x0;
    let mut fx = map.eval(&x);
    let mut res = inf_norm(&fx);
    for iter in 0..opts.newton_max {
        if res <= tol {
            return Ok((x, res, iter));
        }
        let jac = map.jacobian(&x).unwrap_or_else(|| fd_jacobian(map, &x));
        let rhs = -DVector::from_vec(fx.clone());
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(Error::NoConvergence {
                residual: res,
                iterations: iter,
            });
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, di)| xi + lambda * di).collect();
            bx.clamp(&mut trial);
            let ft = map.eval(&trial);
            let rt = inf_norm(&ft);
            if rt < res {
                accepted = Some((trial, ft, rt));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((xn, fnew, rn)) => {
                x = xn;
                fx = fnew;
                res = rn;
            }
            None => {
                return Err(Error::NoConvergence {
                    residual: res,
                    iterations: iter,
                })
            }
        }
    }
    if res <= tol {
        Ok((x, res, opts.newton_max))
    } else {
        Err(Error::NoConvergence {
            residual: res,
            iterations: opts.newton_max,
        })
    }
}

/// Find `x` in `bx` with `max|F_i(x)| <= tol`.
pub fn miranda_solve<M: BoxMap + ?Sized>(
    map: &M,
    bx: &MirandaBox,
    tol: f64,
    opts: &MirandaOptions,
) -> Result<MirandaSolution> {
    if map.dim() != bx.dim() {
        return Err(Error::Precondition(format!(
            "map dimension {} does not match box dimension {}",
            map.dim(),
            bx.dim()
        )));
    }
    check_face_signs(map, bx, opts.face_samples)?;

    let start_width: Vec<f64> = (0..bx.dim()).map(|i| bx.width(i)).collect();
    let mut current = bx.clone();
    let mut bisections = 0;
    while bisections < opts.max_depth {
        let mid = current.midpoint();
        if inf_norm(&map.eval(&mid)) <= tol {
            return Ok(MirandaSolution {
                point: mid,
                residual: inf_norm(&map.eval(&current.midpoint())),
                bisections,
                newton_iters: 0,
                final_box: current,
            });
        }
        if (0..bx.dim()).all(|i| current.width(i) <= opts.min_relative_width * start_width[i]) {
            break;
        }
        let axis = current.longest_axis();
        let m = mid[axis];
        let (lower_ok, upper_ok) = face_sign(map, &current, axis, m, opts.face_samples);
        // Lower half needs F_axis <= 0 on the new upper face, upper half needs >= 0
        // on the new lower face. When both hold the face is a zero set of F_axis;
        // the lower half is kept.
        if lower_ok {
            current.upper[axis] = m;
        } else if upper_ok {
            current.lower[axis] = m;
        } else {
            break;
        }
        bisections += 1;
    }

    let (point, residual, newton_iters) = damped_newton(map, current.midpoint(), bx, tol, opts)?;
    Ok(MirandaSolution {
        point,
        residual,
        bisections,
        newton_iters,
        final_box: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_exact() {
        let map = FnMap::new(2, |x: &[f64]| vec![1.0 - x[0], 1.0 - x[1]]);
        let bx = MirandaBox::cube(2, 0.5, 2.0).unwrap();
        let sol = miranda_solve(&map, &bx, 1e-14, &MirandaOptions::default()).unwrap();
        assert!((sol.point[0] - 1.0).abs() <= 1e-14);
        assert!((sol.point[1] - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn cubic_system() {
        let map = FnMap::new(2, |x: &[f64]| vec![x[1] - x[0].powi(3), 1.0 - x[0] * x[1]]);
        let bx = MirandaBox::cube(2, 0.5, 2.0).unwrap();
        let sol = miranda_solve(&map, &bx, 1e-13, &MirandaOptions::default()).unwrap();
        assert!(bx.contains(&sol.point));
        assert!((sol.point[0] - 1.0).abs() < 1e-10);
        assert!((sol.point[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn face_violation_reported() {
        let map = FnMap::new(2, |x: &[f64]| vec![1.0 + x[0], 1.0 - x[1]]);
        let bx = MirandaBox::cube(2, 0.5, 2.0).unwrap();
        let err = miranda_solve(&map, &bx, 1e-12, &MirandaOptions::default()).unwrap_err();
        assert!(matches!(err, Error::FaceSignViolation { axis: 0, face: "upper", .. }));
    }

    #[test]
    fn one_dimensional_box() {
        let map = FnMap::new(1, |x: &[f64]| vec![2.0 - x[0] * x[0]]);
        let bx = MirandaBox::cube(1, 0.0, 3.0).unwrap();
        let sol = miranda_solve(&map, &bx, 1e-14, &MirandaOptions::default()).unwrap();
        assert!((sol.point[0] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn three_dimensional_box() {
        // Decoupled cubic with the zero at (0.3, -0.2, 0.7).
        let z = [0.3, -0.2, 0.7];
        let map = FnMap::new(3, move |x: &[f64]| {
            (0..3).map(|i| -(x[i] - z[i]) - (x[i] - z[i]).powi(3) + 0.01 * (x[(i + 1) % 3] - z[(i + 1) % 3])).collect()
        });
        let bx = MirandaBox::cube(3, -1.0, 1.0).unwrap();
        let opts = MirandaOptions {
            face_samples: 9,
            ..MirandaOptions::default()
        };
        let sol = miranda_solve(&map, &bx, 1e-13, &opts).unwrap();
        for i in 0..3 {
            assert!((sol.point[i] - z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_box() {
        assert!(MirandaBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(MirandaBox::new(vec![1.0, 0.0], vec![2.0]).is_err());
    }

    #[test]
    fn fd_jacobian_of_polynomial() {
        let map = FnMap::new(2, |x: &[f64]| vec![x[0] * x[0] * x[1], x[1].powi(3)]);
        let j = fd_jacobian(&map, &[1.5, -0.5]);
        assert!((j[(0, 0)] - 2.0 * 1.5 * -0.5).abs() < 1e-8);
        assert!((j[(0, 1)] - 2.25).abs() < 1e-8);
        assert!(j[(1, 0)].abs() < 1e-8);
        assert!((j[(1, 1)] - 0.75).abs() < 1e-8);
    }
}
