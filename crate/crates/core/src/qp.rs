//! Small dense convex QP machinery over box-constrained affine sets.
//!
//! [`ActiveSetQp`] solves `min ½xᵀHx + cᵀx` subject to `Ax = b` and
//! `lower ≤ x ≤ upper` for positive semidefinite `H` from a feasible start,
//! using a primal active-set method with a null-space step. Directions of
//! zero curvature are followed to the nearest bound, so singular `H` is fine.
//!
//! [`project_capped_simplex`] and [`accelerated_projected_gradient`] cover the
//! common case of the capped simplex `{Σx = 1, 0 ≤ x ≤ λ}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

/// Euclidean projection of `v` onto `{x : Σx = 1, 0 ≤ x ≤ caps}`.
///
/// The projection is `clamp(v - τ, 0, caps)` for the unique shift `τ` that
/// makes the result sum to one. `τ` is bracketed by bisection and then solved
/// exactly on the resulting free set.
pub fn project_capped_simplex(v: &[f64], caps: &[f64]) -> Result<Vec<f64>> {
    check_caps(caps)?;
    if v.len() != caps.len() {
        return Err(Error::Domain(format!("{} values for {} caps", v.len(), caps.len())));
    }
    let total = |tau: f64| -> f64 { v.iter().zip(caps).map(|(x, c)| (x - tau).clamp(0.0, *c)).sum() };
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let cap_max = caps.iter().copied().fold(0.0, f64::max);
    // total(hi) = 0 and total(lo) = Σcaps ≥ 1.
    let mut lo = vmin - cap_max - 1.0;
    let mut hi = vmax;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    // Exact shift on the free set at tau.
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    let mut capped = 0.0;
    for (x, c) in v.iter().zip(caps) {
        let y = x - tau;
        if y >= *c {
            capped += c;
        } else if y > 0.0 {
            free_sum += x;
            n_free += 1;
        }
    }
    let tau = if n_free > 0 {
        (free_sum + capped - 1.0) / n_free as f64
    } else {
        tau
    };
    let mut x: Vec<f64> = v.iter().zip(caps).map(|(x, c)| (x - tau).clamp(0.0, *c)).collect();
    // Absorb the last rounding error into a free coordinate.
    let err = 1.0 - x.iter().sum::<f64>();
    if err != 0.0 {
        if let Some(i) = (0..x.len()).find(|&i| x[i] + err > 0.0 && x[i] + err < caps[i] && x[i] > 0.0) {
            x[i] += err;
        }
    }
    Ok(x)
}

/// Validates caps for the capped simplex: each in (0, 1], summing to at least one.
pub fn check_caps(caps: &[f64]) -> Result<()> {
    if caps.is_empty() {
        return Err(Error::EmptyPortfolio("no assets".into()));
    }
    if let Some(c) = caps.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
        return Err(Error::Domain(format!("cap {c} outside (0, 1]")));
    }
    let total: f64 = caps.iter().sum();
    if total < 1.0 - 1e-12 {
        return Err(Error::Infeasible(format!("caps sum to {total} < 1")));
    }
    Ok(())
}

/// Starting point for capped-simplex solvers: the uniform vector projected
/// onto the feasible set.
pub fn uniform_start(caps: &[f64]) -> Result<Vec<f64>> {
    let n = caps.len().max(1);
    project_capped_simplex(&vec![1.0 / n as f64; caps.len()], caps)
}

/// `‖x − Π(x − ∇f(x)/L)‖∞` on the capped simplex. Zero exactly at a KKT point;
/// invariant to scaling of the objective when `lipschitz` scales with it.
pub fn projected_gradient_residual(x: &[f64], grad: &[f64], lipschitz: f64, caps: &[f64]) -> Result<f64> {
    if lipschitz <= 0.0 {
        return Ok(0.0);
    }
    let step: Vec<f64> = x.iter().zip(grad).map(|(xi, gi)| xi - gi / lipschitz).collect();
    let p = project_capped_simplex(&step, caps)?;
    Ok(x.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRun {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// FISTA with gradient-based adaptive restart over the capped simplex.
pub fn accelerated_projected_gradient<F>(
    grad: F,
    lipschitz: f64,
    x0: &[f64],
    caps: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<GradientRun>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    if lipschitz <= 0.0 {
        return Ok(GradientRun {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut residual = projected_gradient_residual(&x, &grad(&x), lipschitz, caps)?;
    while residual > tolerance && iterations < max_iterations {
        iterations += 1;
        let gy = grad(&y);
        let step: Vec<f64> = y.iter().zip(&gy).map(|(yi, gi)| yi - gi / lipschitz).collect();
        let x_next = project_capped_simplex(&step, caps)?;
        // Restart when the momentum direction opposes descent.
        let restart = gy
            .iter()
            .zip(x_next.iter().zip(&x))
            .map(|(g, (xn, xo))| g * (xn - xo))
            .sum::<f64>()
            > 0.0;
        let t_next = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        let beta = if restart { 0.0 } else { (t - 1.0) / t_next };
        y = x_next.iter().zip(&x).map(|(xn, xo)| xn + beta * (xn - xo)).collect();
        x = x_next;
        t = t_next;
        residual = projected_gradient_residual(&x, &grad(&x), lipschitz, caps)?;
    }
    Ok(GradientRun {
        x,
        iterations,
        residual,
        converged: residual <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// `min ½xᵀHx + cᵀx  s.t.  Ax = b,  lower ≤ x ≤ upper`.
#[derive(Debug, Clone)]
pub struct ActiveSetQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest stationarity or multiplier-sign violation, divided by the
    /// largest eigenvalue of `H` so that it is measured in units of `x`.
    pub kkt_residual: f64,
    pub converged: bool,
}

impl ActiveSetQp {
    /// Capped-simplex QP `min xᵀCx` (that is `H = 2C`, no linear term).
    pub fn capped_simplex(cov: &DMatrix<f64>, caps: &[f64]) -> Self {
        let n = caps.len();
        Self {
            hessian: cov * 2.0,
            linear: DVector::zeros(n),
            eq_matrix: DMatrix::from_element(1, n, 1.0),
            eq_rhs: DVector::from_element(1, 1.0),
            lower: DVector::zeros(n),
            upper: DVector::from_column_slice(caps),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn solve(&self, x0: &DVector<f64>) -> Result<QpSolution> {
        let n = x0.len();
        let m = self.eq_matrix.nrows();
        if self.hessian.shape() != (n, n) || self.eq_matrix.ncols() != n || self.eq_rhs.len() != m {
            return Err(Error::Domain("QP dimensions do not agree".into()));
        }
        let scale = self.hessian.amax().max(self.linear.amax()).max(f64::MIN_POSITIVE);
        let bound_tol = 1e-12;
        let eq_violation = (&self.eq_matrix * x0 - &self.eq_rhs).amax();
        let infeasible_bound = (0..n).any(|i| x0[i] < self.lower[i] - 1e-9 || x0[i] > self.upper[i] + 1e-9);
        if eq_violation > 1e-8 || infeasible_bound {
            return Err(Error::Infeasible("QP start point is not feasible".into()));
        }

        let mut x = x0.clone();
        let mut status = vec![Bound::Free; n];
        // Seed the working set with bounds active at the start, keeping it
        // linearly independent.
        for i in 0..n {
            let which = if x[i] <= self.lower[i] + bound_tol {
                Bound::Lower
            } else if x[i] >= self.upper[i] - bound_tol {
                Bound::Upper
            } else {
                continue;
            };
            status[i] = which;
            if free_rank(&self.eq_matrix, &status) < m {
                status[i] = Bound::Free;
            } else {
                x[i] = if which == Bound::Lower { self.lower[i] } else { self.upper[i] };
            }
        }

        let h_scale = max_eigenvalue(&self.hessian).max(scale * 1e-300);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iterations {
            iterations += 1;
            let grad = &self.hessian * &x + &self.linear;
            let free: Vec<usize> = (0..n).filter(|&i| status[i] == Bound::Free).collect();
            let step = self.null_space_step(&free, &grad, h_scale);
            let Some((p_free, is_ray)) = step else {
                // Stationary on the current face: check multiplier signs.
                let residuals = self.multiplier_residuals(&free, &grad);
                let mut worst: Option<(usize, f64)> = None;
                for i in 0..n {
                    let violation = match status[i] {
                        Bound::Lower => -residuals[i],
                        Bound::Upper => residuals[i],
                        Bound::Free => continue,
                    };
                    if violation > 1e-12 * h_scale && worst.is_none_or(|(_, w)| violation > w) {
                        worst = Some((i, violation));
                    }
                }
                match worst {
                    Some((i, _)) => status[i] = Bound::Free,
                    None => {
                        converged = true;
                        break;
                    }
                }
                continue;
            };

            // Longest step along p_free that keeps the free variables in bounds.
            let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
            let mut blocking: Option<(usize, Bound)> = None;
            for (k, &i) in free.iter().enumerate() {
                let p = p_free[k];
                if p < 0.0 {
                    let a = (self.lower[i] - x[i]) / p;
                    if a < alpha {
                        alpha = a.max(0.0);
                        blocking = Some((i, Bound::Lower));
                    }
                } else if p > 0.0 {
                    let a = (self.upper[i] - x[i]) / p;
                    if a < alpha {
                        alpha = a.max(0.0);
                        blocking = Some((i, Bound::Upper));
                    }
                }
            }
            if !alpha.is_finite() {
                return Err(Error::Domain("QP is unbounded below".into()));
            }
            for (k, &i) in free.iter().enumerate() {
                x[i] += alpha * p_free[k];
            }
            if let Some((i, which)) = blocking {
                status[i] = which;
                x[i] = if which == Bound::Lower { self.lower[i] } else { self.upper[i] };
            }
        }

        let grad = &self.hessian * &x + &self.linear;
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == Bound::Free).collect();
        let residuals = self.multiplier_residuals(&free, &grad);
        let mut kkt: f64 = 0.0;
        for i in 0..n {
            let v = match status[i] {
                Bound::Free => residuals[i].abs(),
                Bound::Lower => (-residuals[i]).max(0.0),
                Bound::Upper => residuals[i].max(0.0),
            };
            kkt = kkt.max(v);
        }
        let kkt_residual = if h_scale > 0.0 { kkt / h_scale } else { 0.0 };
        Ok(QpSolution {
            objective: self.objective(&x),
            x,
            iterations,
            kkt_residual,
            converged,
        })
    }

    /// Minimizer of the quadratic model over the current face, as a step for
    /// the free variables. `None` when the step vanishes. The flag marks a
    /// descent ray of zero curvature.
    fn null_space_step(&self, free: &[usize], grad: &DVector<f64>, h_scale: f64) -> Option<(DVector<f64>, bool)> {
        let k = free.len();
        if k == 0 {
            return None;
        }
        let m = self.eq_matrix.nrows();
        let a_free = DMatrix::from_fn(m, k, |r, j| self.eq_matrix[(r, free[j])]);
        let z = null_space(&a_free);
        if z.ncols() == 0 {
            return None;
        }
        let h_free = DMatrix::from_fn(k, k, |i, j| self.hessian[(free[i], free[j])]);
        let g_free = DVector::from_fn(k, |i, _| grad[free[i]]);
        let reduced_h = z.transpose() * &h_free * &z;
        let reduced_g = z.transpose() * &g_free;
        let eig = SymmetricEigen::new(reduced_h);
        let curvature_tol = 1e-11 * h_scale.max(f64::MIN_POSITIVE);
        let g_scale = g_free.amax().max(h_scale);
        let mut y = DVector::zeros(z.ncols());
        let mut ray = DVector::zeros(z.ncols());
        let mut has_ray = false;
        for (j, lambda) in eig.eigenvalues.iter().enumerate() {
            let q = eig.eigenvectors.column(j);
            let gq = q.dot(&reduced_g);
            if *lambda > curvature_tol {
                y -= q * (gq / lambda);
            } else if gq.abs() > 1e-13 * g_scale {
                ray -= q * gq;
                has_ray = true;
            }
        }
        let (dir, is_ray) = if has_ray { (ray, true) } else { (y, false) };
        let p = &z * dir;
        let x_scale = free.iter().map(|&i| self.upper[i] - self.lower[i]).fold(0.0, f64::max).max(1.0);
        if p.amax() <= 1e-15 * x_scale {
            return None;
        }
        // Reject steps that do not decrease the model (rounding noise).
        let decrease = g_free.dot(&p) + 0.5 * p.dot(&(&h_free * &p));
        if !is_ray && decrease >= 0.0 {
            return None;
        }
        Some((p, is_ray))
    }

    /// `∇f − Aᵀν` with `ν` fitted on the free variables by least squares.
    fn multiplier_residuals(&self, free: &[usize], grad: &DVector<f64>) -> DVector<f64> {
        let m = self.eq_matrix.nrows();
        if m == 0 || free.is_empty() {
            return grad.clone();
        }
        let a_free = DMatrix::from_fn(m, free.len(), |r, j| self.eq_matrix[(r, free[j])]);
        let g_free = DVector::from_fn(free.len(), |i, _| grad[free[i]]);
        let normal = &a_free * a_free.transpose();
        let rhs = &a_free * g_free;
        let nu = normal
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-14 * normal.amax().max(f64::MIN_POSITIVE))
            .unwrap_or_else(|_| DVector::zeros(m));
        grad - self.eq_matrix.transpose() * nu
    }
}

fn free_rank(eq: &DMatrix<f64>, status: &[Bound]) -> usize {
    let free: Vec<usize> = (0..status.len()).filter(|&i| status[i] == Bound::Free).collect();
    if eq.nrows() == 0 || free.is_empty() {
        return 0;
    }
    let a = DMatrix::from_fn(eq.nrows(), free.len(), |r, j| eq[(r, free[j])]);
    a.rank(1e-12 * a.amax().max(f64::MIN_POSITIVE))
}

/// Orthonormal basis of the null space of `a` (columns).
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(k, k);
    }
    let gram = a.transpose() * a;
    let eig = SymmetricEigen::new(gram);
    let tol = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let cols: Vec<usize> = (0..k).filter(|&j| eig.eigenvalues[j] <= tol).collect();
    DMatrix::from_fn(k, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.max().max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sum(x: &[f64]) -> f64 {
        x.iter().sum()
    }

    #[test]
    fn projection_of_feasible_point_is_identity() {
        let caps = [0.5, 0.5, 0.5];
        let x = [0.2, 0.3, 0.5];
        let p = project_capped_simplex(&x, &caps).unwrap();
        for (a, b) in x.iter().zip(&p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_respects_caps() {
        let p = project_capped_simplex(&[10.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.2; 6]).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15);
        assert!((sum(&p) - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|v| *v <= 0.2 + 1e-15 && *v >= 0.0));
    }

    #[test]
    fn infeasible_caps_are_rejected() {
        assert!(matches!(
            project_capped_simplex(&[0.0, 0.0], &[0.3, 0.3]),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(check_caps(&[0.0, 1.0]), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_optimal(
            v in prop::collection::vec(-3.0f64..3.0, 1..8),
            cap in 0.15f64..1.0,
        ) {
            let n = v.len();
            let cap = cap.max(1.0 / n as f64);
            let caps = vec![cap; n];
            let p = project_capped_simplex(&v, &caps).unwrap();
            prop_assert!((sum(&p) - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| *x >= 0.0 && *x <= cap + 1e-12));
            // Variational inequality: (v - p)·(q - p) ≤ 0 for feasible q.
            let q = uniform_start(&caps).unwrap();
            let vi: f64 = (0..n).map(|i| (v[i] - p[i]) * (q[i] - p[i])).sum();
            prop_assert!(vi <= 1e-10);
        }
    }

    #[test]
    fn active_set_matches_closed_form() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let qp = ActiveSetQp::capped_simplex(&cov, &[1.0, 1.0]);
        let sol = qp.solve(&DVector::from_column_slice(&[0.5, 0.5])).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 0.8).abs() < 1e-12);
        assert!((sol.x[1] - 0.2).abs() < 1e-12);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn active_set_handles_zero_hessian() {
        let qp = ActiveSetQp::capped_simplex(&DMatrix::zeros(3, 3), &[0.5; 3]);
        let x0 = DVector::from_element(3, 1.0 / 3.0);
        let sol = qp.solve(&x0).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.x, x0);
    }

    #[test]
    fn active_set_follows_zero_curvature_rays() {
        // Linear objective: move all mass to the cheapest coordinates.
        let mut qp = ActiveSetQp::capped_simplex(&DMatrix::zeros(3, 3), &[0.6, 0.6, 0.6]);
        qp.linear = DVector::from_column_slice(&[3.0, 1.0, 2.0]);
        let sol = qp.solve(&DVector::from_element(3, 1.0 / 3.0)).unwrap();
        assert!(sol.converged);
        assert!((sol.x[1] - 0.6).abs() < 1e-12);
        assert!((sol.x[2] - 0.4).abs() < 1e-12);
        assert!(sol.x[0].abs() < 1e-12);
    }

    #[test]
    fn fista_agrees_with_active_set() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5]);
        let caps = [0.5, 0.5, 0.5];
        let exact = ActiveSetQp::capped_simplex(&cov, &caps)
            .solve(&DVector::from_column_slice(&uniform_start(&caps).unwrap()))
            .unwrap();
        let grad = |x: &[f64]| -> Vec<f64> { (&cov * DVector::from_column_slice(x) * 2.0).iter().copied().collect() };
        let run = accelerated_projected_gradient(
            grad,
            2.0 * max_eigenvalue(&cov),
            &uniform_start(&caps).unwrap(),
            &caps,
            1e-10,
            100_000,
        )
        .unwrap();
        assert!(run.converged);
        for i in 0..3 {
            assert!((run.x[i] - exact.x[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let qp = ActiveSetQp::capped_simplex(&DMatrix::identity(2, 2), &[1.0, 1.0]);
        assert!(qp.solve(&DVector::from_column_slice(&[0.9, 0.9])).is_err());
    }
}
