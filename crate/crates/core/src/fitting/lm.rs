//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.
//!
//! Minimizes `½‖r(p)‖²` over the free entries of `p`. Each iteration solves
//! `(JᵀJ + λD²) h = −Jᵀr` with Marquardt's diagonal scaling `D` (running
//! maximum of the column norms of `J`). A step is accepted only if it is
//! feasible and lowers the cost; λ follows Nielsen's update rule.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// A residual vector and its Jacobian over a full parameter vector.
pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Jacobian `∂r_i/∂p_j`, `n_residuals × n_params`. Defaults to central
    /// differences.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        numeric_jacobian(self, p)
    }

    /// Whether `p` lies in the model's domain. Steps into an infeasible
    /// point are rejected like any other uphill step.
    fn feasible(&self, _p: &[f64]) -> bool {
        true
    }
}

/// Central-difference Jacobian with steps `∛ε · max(|p_j|, 1)`.
pub fn numeric_jacobian<P: LeastSquares + ?Sized>(problem: &P, p: &[f64]) -> DMatrix<f64> {
    let m = problem.n_residuals();
    let n = problem.n_params();
    let mut jac = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    let step_scale = f64::EPSILON.cbrt();
    for j in 0..n {
        let h = step_scale * p[j].abs().max(1.0);
        q[j] = p[j] + h;
        problem.residuals(&q, &mut plus);
        q[j] = p[j] - h;
        problem.residuals(&q, &mut minus);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Largest cosine between the residual and any Jacobian column.
    pub gradient_tol: f64,
    /// Relative scaled step length `‖Dh‖ / ‖Dp‖`.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convergence {
    Gradient,
    Step,
    ExactFit,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmError {
    #[error("no convergence after {iterations} iterations (cost {cost:e})")]
    NoConvergence { iterations: usize, cost: f64 },
    #[error("residuals are not finite at the starting point")]
    NonFiniteStart,
    #[error("starting point is outside the model domain")]
    InfeasibleStart,
    #[error("parameter vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
pub struct LmReport {
    /// Full parameter vector, fixed entries untouched.
    pub params: Vec<f64>,
    /// `½‖r‖²` at the solution.
    pub cost: f64,
    pub residuals: Vec<f64>,
    /// Jacobian over the free parameters at the solution.
    pub jacobian: DMatrix<f64>,
    /// Indices (into the full vector) of the free parameters.
    pub free: Vec<usize>,
    pub iterations: usize,
    pub evaluations: usize,
    pub convergence: Convergence,
}

impl LmReport {
    /// `Σ r²`.
    pub fn ssr(&self) -> f64 {
        2.0 * self.cost
    }

    pub fn dof(&self) -> usize {
        self.residuals.len().saturating_sub(self.free.len())
    }

    /// Covariance of the free parameters, `(JᵀJ)⁻¹ · SSR/(m − n)`.
    ///
    /// Falls back to a pseudo-inverse when `JᵀJ` is singular.
    pub fn covariance(&self) -> DMatrix<f64> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let dof = self.dof().max(1) as f64;
        let scale = self.ssr() / dof;
        inverse_spd(&jtj) * scale
    }
}

/// Inverse of a symmetric positive semidefinite matrix. Columns are
/// equilibrated first; singular directions get a pseudo-inverse.
pub fn inverse_spd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = a[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * d[i] * d[j]);
    let inv = match scaled.clone().cholesky() {
        Some(c) => c.inverse(),
        None => scaled.pseudo_inverse(1e-13).unwrap_or_else(|_| DMatrix::zeros(n, n)),
    };
    DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * d[i] * d[j])
}

struct Masked<'a, P: LeastSquares + ?Sized> {
    problem: &'a P,
    full: Vec<f64>,
    free: Vec<usize>,
}

impl<P: LeastSquares + ?Sized> Masked<'_, P> {
    fn expand(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut p = self.full.clone();
        for (k, &j) in self.free.iter().enumerate() {
            p[j] = x[k];
        }
        p
    }

    fn eval(&self, x: &DVector<f64>) -> (Vec<f64>, f64) {
        let p = self.expand(x);
        let mut r = vec![0.0; self.problem.n_residuals()];
        self.problem.residuals(&p, &mut r);
        let cost = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        (r, cost)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let full = self.problem.jacobian(&self.expand(x));
        full.select_columns(self.free.iter())
    }
}

/// Minimize over all parameters.
pub fn minimize<P: LeastSquares + ?Sized>(
    problem: &P,
    start: &[f64],
    options: &LmOptions,
) -> Result<LmReport, LmError> {
    minimize_masked(problem, start, &vec![true; start.len()], options)
}

/// Minimize over the parameters whose `free` flag is set; the others keep
/// their starting values.
pub fn minimize_masked<P: LeastSquares + ?Sized>(
    problem: &P,
    start: &[f64],
    free: &[bool],
    options: &LmOptions,
) -> Result<LmReport, LmError> {
    let n_full = problem.n_params();
    if start.len() != n_full || free.len() != n_full {
        return Err(LmError::DimensionMismatch {
            expected: n_full,
            got: start.len().min(free.len()),
        });
    }
    if !problem.feasible(start) {
        return Err(LmError::InfeasibleStart);
    }
    let masked = Masked {
        problem,
        full: start.to_vec(),
        free: (0..n_full).filter(|&j| free[j]).collect(),
    };
    let n = masked.free.len();
    let mut x = DVector::from_iterator(n, masked.free.iter().map(|&j| start[j]));
    let (mut r, mut cost) = masked.eval(&x);
    if !cost.is_finite() {
        return Err(LmError::NonFiniteStart);
    }
    let mut evaluations = 1;
    let mut jac = masked.jacobian(&x);

    let finish = |x: &DVector<f64>, r: Vec<f64>, cost, jac, iterations, evaluations, convergence| LmReport {
        params: masked.expand(x),
        cost,
        residuals: r,
        jacobian: jac,
        free: masked.free.clone(),
        iterations,
        evaluations,
        convergence,
    };

    if n == 0 || cost == 0.0 {
        return Ok(finish(&x, r, cost, jac, 0, evaluations, Convergence::ExactFit));
    }

    let mut diag = DVector::<f64>::zeros(n);
    let mut lambda = 1e-3;
    let mut nu = 2.0;

    for iteration in 1..=options.max_iterations {
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;

        for j in 0..n {
            diag[j] = diag[j].max(jtj[(j, j)].sqrt());
        }

        let r_norm = rv.norm();
        let gradient_cosine = (0..n)
            .filter(|&j| jtj[(j, j)] > 0.0)
            .map(|j| g[j].abs() / (jtj[(j, j)].sqrt() * r_norm))
            .fold(0.0, f64::max);
        if gradient_cosine <= options.gradient_tol {
            return Ok(finish(
                &x,
                r,
                cost,
                jac,
                iteration - 1,
                evaluations,
                Convergence::Gradient,
            ));
        }

        let dx_norm = x.component_mul(&diag).norm();
        loop {
            let mut a = jtj.clone();
            for j in 0..n {
                let dj = if diag[j] > 0.0 { diag[j] } else { 1.0 };
                a[(j, j)] += lambda * dj * dj;
            }
            let step = a
                .clone()
                .cholesky()
                .map(|c| c.solve(&(-&g)))
                .or_else(|| a.lu().solve(&(-&g)));
            let Some(h) = step else {
                lambda *= nu;
                nu *= 2.0;
                if !lambda.is_finite() {
                    return Err(LmError::NoConvergence {
                        iterations: iteration,
                        cost,
                    });
                }
                continue;
            };

            let scaled_step = h.component_mul(&diag).norm();
            if scaled_step <= options.step_tol * (dx_norm + options.step_tol) {
                return Ok(finish(&x, r, cost, jac, iteration, evaluations, Convergence::Step));
            }

            let x_new = &x + &h;
            let feasible = problem.feasible(&masked.expand(&x_new));
            let (r_new, cost_new) = if feasible {
                evaluations += 1;
                masked.eval(&x_new)
            } else {
                (Vec::new(), f64::INFINITY)
            };

            // Predicted reduction of the local quadratic model.
            let predicted = -(h.dot(&g)) - 0.5 * (&jac * &h).norm_squared();
            if cost_new.is_finite() && cost_new < cost && predicted > 0.0 {
                let rho = (cost - cost_new) / predicted;
                lambda *= (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                x = x_new;
                r = r_new;
                cost = cost_new;
                jac = masked.jacobian(&x);
                if cost == 0.0 {
                    return Ok(finish(&x, r, cost, jac, iteration, evaluations, Convergence::ExactFit));
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if !lambda.is_finite() {
                return Err(LmError::NoConvergence {
                    iterations: iteration,
                    cost,
                });
            }
        }
    }
    Err(LmError::NoConvergence {
        iterations: options.max_iterations,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(−b·t) + c
    struct ExpDecay {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for ExpDecay {
        fn n_params(&self) -> usize {
            3
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                out[i] = p[0] * (-p[1] * t).exp() + p[2] - y;
            }
        }
        fn feasible(&self, p: &[f64]) -> bool {
            p[1] > 0.0
        }
    }

    fn decay(noise: f64) -> ExpDecay {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let y = t
            .iter()
            .enumerate()
            .map(|(i, t)| 2.5 * (-1.3 * t).exp() + 0.4 + noise * ((i * 7919 % 13) as f64 - 6.0) / 6.0)
            .collect();
        ExpDecay { t, y }
    }

    /// Rosenbrock as a two-residual problem.
    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
        }
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let rep = minimize(&decay(0.0), &[1.0, 0.5, 0.0], &LmOptions::default()).unwrap();
        for (got, want) in rep.params.iter().zip([2.5, 1.3, 0.4]) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn rosenbrock_valley() {
        let rep = minimize(&Rosenbrock, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 1.0).abs() < 1e-8 && (rep.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn noisy_fit_has_finite_covariance() {
        let rep = minimize(&decay(0.02), &[1.0, 0.5, 0.0], &LmOptions::default()).unwrap();
        let cov = rep.covariance();
        for i in 0..3 {
            assert!(cov[(i, i)] > 0.0 && cov[(i, i)].is_finite());
        }
        let eig = cov.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e >= -1e-12 * eig.max()));
    }

    #[test]
    fn fixed_parameters_stay_put() {
        let rep = minimize_masked(
            &decay(0.0),
            &[1.0, 1.3, 0.0],
            &[true, false, true],
            &LmOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.params[1], 1.3);
        assert_eq!(rep.free, vec![0, 2]);
        assert!((rep.params[0] - 2.5).abs() < 1e-8);
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let opts = LmOptions {
            max_iterations: 2,
            ..LmOptions::default()
        };
        assert!(matches!(
            minimize(&Rosenbrock, &[-1.2, 1.0], &opts),
            Err(LmError::NoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn infeasible_start_is_rejected() {
        assert_eq!(
            minimize(&decay(0.0), &[1.0, -0.5, 0.0], &LmOptions::default()).unwrap_err(),
            LmError::InfeasibleStart
        );
    }

    #[test]
    fn numeric_jacobian_matches_analytic() {
        let p = decay(0.0);
        let x = [2.0, 1.1, 0.3];
        let j = numeric_jacobian(&p, &x);
        for (i, &t) in p.t.iter().enumerate() {
            let e = (-x[1] * t).exp();
            assert!((j[(i, 0)] - e).abs() < 1e-9);
            assert!((j[(i, 1)] + x[0] * t * e).abs() < 1e-9);
            assert!((j[(i, 2)] - 1.0).abs() < 1e-9);
        }
    }
}
