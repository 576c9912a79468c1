//! Small projected Levenberg-Marquardt solver shared by the fitting routines.
//!
//! Residuals are expected to be pre-weighted (divided by their standard
//! errors), so the cost is half the chi-square. Feasibility is maintained by
//! projecting every trial point onto the problem's feasible set.

use nalgebra::{DMatrix, DVector};

pub(crate) trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Writes weighted residuals for parameter vector `x` into `out`.
    fn residuals(&self, x: &[f64], out: &mut [f64]);
    /// Per-parameter box constraints.
    fn bounds(&self) -> Vec<(f64, f64)>;
    /// Maps an arbitrary point onto the feasible set. Problems with constraints
    /// beyond their box override this, and must still respect `bounds`.
    fn project(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.bounds()) {
            *v = v.clamp(lo, hi);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub cost_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            cost_tol: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmReport {
    pub x: Vec<f64>,
    /// Sum of squared weighted residuals.
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Jacobian of the weighted residuals at `x`.
    pub jacobian: DMatrix<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub(crate) fn jacobian<P: LeastSquares + ?Sized>(problem: &P, x: &[f64]) -> DMatrix<f64> {
    let (n, m) = (problem.n_params(), problem.n_residuals());
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for j in 0..n {
        let h = 1e-7 * x[j].abs().max(1e-2);
        xp[j] = x[j] + h;
        problem.residuals(&xp, &mut rp);
        xp[j] = x[j] - h;
        problem.residuals(&xp, &mut rm);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Norm of the projected gradient step, zero at a constrained stationary point.
fn projected_gradient_norm<P: LeastSquares + ?Sized>(problem: &P, x: &[f64], grad: &DVector<f64>) -> f64 {
    let mut moved: Vec<f64> = x.iter().zip(grad.iter()).map(|(xi, gi)| xi - gi).collect();
    problem.project(&mut moved);
    moved
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn minimize<P: LeastSquares + ?Sized>(problem: &P, start: &[f64], opts: LmOptions) -> LmReport {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut x = start.to_vec();
    problem.project(&mut x);
    let mut r = vec![0.0; m];
    problem.residuals(&x, &mut r);
    let mut chi2 = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut trial_r = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(problem, &x);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if projected_gradient_norm(problem, &x, &grad) < opts.gradient_tol || chi2 == 0.0 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        // Parameters pinned at a bound with the gradient pushing outward are
        // held fixed for this iteration.
        let bounds = problem.bounds();
        let free: Vec<usize> = (0..n)
            .filter(|&k| {
                let (lo, hi) = bounds[k];
                let pinned_low = x[k] <= lo && grad[k] > 0.0;
                let pinned_high = x[k] >= hi && grad[k] < 0.0;
                !(pinned_low || pinned_high)
            })
            .collect();
        if free.is_empty() {
            converged = true;
            break;
        }
        let nf = free.len();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = DMatrix::zeros(nf, nf);
            let mut b = DVector::zeros(nf);
            for (p, &i) in free.iter().enumerate() {
                b[p] = -grad[i];
                for (q, &j) in free.iter().enumerate() {
                    a[(p, q)] = jtj[(i, j)];
                }
                a[(p, p)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let reduced = match a.cholesky() {
                Some(ch) => ch.solve(&b),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = x.clone();
            for (p, &i) in free.iter().enumerate() {
                trial[i] += reduced[p];
            }
            problem.project(&mut trial);
            problem.residuals(&trial, &mut trial_r);
            let trial_chi2 = sum_sq(&trial_r);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let step_norm = trial
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let x_norm = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let reduction = chi2 - trial_chi2;
                x = trial;
                std::mem::swap(&mut r, &mut trial_r);
                let old = chi2;
                chi2 = trial_chi2;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step_norm <= opts.step_tol * (x_norm + opts.step_tol)
                    || reduction <= opts.cost_tol * old.max(f64::MIN_POSITIVE)
                {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let jacobian = jacobian(problem, &x);
    LmReport {
        x,
        chi2,
        iterations,
        converged,
        jacobian,
    }
}

/// Standard errors from the inverse curvature `(JᵀJ)⁻¹`.
///
/// Directions the data do not constrain get an infinite uncertainty.
pub(crate) fn curvature_uncertainties(jac: &DMatrix<f64>) -> Vec<f64> {
    let n = jac.ncols();
    let jtj = jac.transpose() * jac;
    if let Some(inv) = jtj.clone().try_inverse() {
        let ok = (0..n).all(|k| inv[(k, k)].is_finite() && inv[(k, k)] >= 0.0);
        if ok {
            return (0..n).map(|k| inv[(k, k)].sqrt()).collect();
        }
    }
    let svd = jtj.svd(true, true);
    let max_sv = svd.singular_values.max();
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    (0..n)
        .map(|k| {
            let mut var = 0.0;
            for (s, sv) in svd.singular_values.iter().enumerate() {
                let weight = v_t[(s, k)].powi(2);
                if *sv <= max_sv * 1e-12 {
                    if weight > 1e-12 {
                        return f64::INFINITY;
                    }
                } else {
                    var += weight / sv;
                }
            }
            var.sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquares for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.xs.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (o, (x, y)) in out.iter_mut().zip(self.xs.iter().zip(&self.ys)) {
                *o = p[0] + p[1] * x - y;
            }
        }
        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)]
        }
    }

    #[test]
    fn fits_a_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys = xs.iter().map(|x| 2.0 + 0.5 * x).collect();
        let report = minimize(&Line { xs, ys }, &[0.0, 0.0], LmOptions::default());
        assert!(report.converged);
        assert!((report.x[0] - 2.0).abs() < 1e-9);
        assert!((report.x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn respects_bounds() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys = xs.iter().map(|x| 1.0 - 0.3 * x).collect();
        let report = minimize(&Line { xs, ys }, &[0.0, 1.0], LmOptions::default());
        assert!(report.converged, "{report:?}");
        assert_eq!(report.x[1], 0.0);
    }

    #[test]
    fn degenerate_direction_gets_infinite_uncertainty() {
        let jac = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let unc = curvature_uncertainties(&jac);
        assert!(unc.iter().all(|u| u.is_infinite()));
    }
}
