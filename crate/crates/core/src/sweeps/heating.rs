//! Heating-model regression on the excess bath occupancy
//! `Y = (n̄_f Γ_eff − Γ_b)/Γ_m − n̄_th = α₁ n̄_c + α₂ n̄_c²`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{self, DriveConfig, HeatingModel, SystemParams};

use super::linear::{weighted_least_squares, LinearFit};
use super::SweepError;

/// Design condition number above which α₁ and α₂ are not separable.
pub const HEATING_CONDITION_LIMIT: f64 = 1e8;
/// Minimum number of runs for a heating fit.
pub const HEATING_MIN_RUNS: usize = 4;
/// Minimum ratio of largest to smallest cooling-tone photon number.
pub const HEATING_MIN_SPAN: f64 = 3.0;

/// One measured occupancy with its drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatingPoint {
    pub drive: DriveConfig,
    pub n_f: f64,
    /// 1σ uncertainty of `n_f`. Zero for every point selects unweighted
    /// least squares.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingFit {
    /// Constrained coefficients. A coefficient clipped to zero keeps the
    /// uncertainty of the unconstrained fit.
    pub model: HeatingModel,
    /// Unconstrained `[α₁, α₂]`.
    pub unconstrained: [f64; 2],
    pub clipped: Vec<String>,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub points: usize,
    pub condition: f64,
}

/// Excess bath occupancy and its uncertainty for one point.
pub fn excess_bath(params: &SystemParams, point: &HeatingPoint) -> (f64, f64) {
    let rates = model::scattering_rates(params, &point.drive);
    let gamma_eff = params.gamma_m + rates.gamma_opt();
    let y = (point.n_f * gamma_eff - rates.gamma_b) / params.gamma_m - params.n_th;
    (y, point.sigma * gamma_eff / params.gamma_m)
}

fn subset_fit(n_c: &[f64], y: &[f64], w: &[f64], cols: &[usize]) -> Option<LinearFit> {
    let x = DMatrix::from_fn(n_c.len(), cols.len(), |i, j| n_c[i].powi(cols[j] as i32 + 1));
    weighted_least_squares(&x, y, w)
}

/// Weighted least squares for `(α₁, α₂)` with both constrained to be
/// nonnegative (active-set projection with refit).
pub fn fit_heating(points: &[HeatingPoint], params: &SystemParams) -> Result<HeatingFit, SweepError> {
    params.validate()?;
    if points.len() < HEATING_MIN_RUNS {
        return Err(SweepError::InsufficientRuns {
            needed: HEATING_MIN_RUNS,
            got: points.len(),
        });
    }
    for p in points {
        p.drive.validate()?;
        if !(p.n_f.is_finite() && p.sigma.is_finite() && p.sigma >= 0.0 && p.drive.n_c > 0.0) {
            return Err(SweepError::InvalidInput(format!(
                "heating point needs finite n_f, sigma >= 0 and n_c > 0 (n_f = {}, sigma = {}, n_c = {})",
                p.n_f, p.sigma, p.drive.n_c
            )));
        }
    }
    let unweighted = points.iter().all(|p| p.sigma == 0.0);
    if !unweighted && points.iter().any(|p| p.sigma == 0.0) {
        return Err(SweepError::InvalidInput(
            "either all or no heating points may have zero sigma".into(),
        ));
    }
    let n_c: Vec<f64> = points.iter().map(|p| p.drive.n_c).collect();
    let lo = n_c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = n_c.iter().copied().fold(0.0, f64::max);
    if hi / lo < HEATING_MIN_SPAN {
        return Err(SweepError::Degenerate(format!(
            "n_c spans a factor {:.3} < {HEATING_MIN_SPAN}; α₁ and α₂ are not separable",
            hi / lo
        )));
    }
    let (y, w): (Vec<f64>, Vec<f64>) = points
        .iter()
        .map(|p| {
            let (y, s) = excess_bath(params, p);
            (y, if unweighted { 1.0 } else { 1.0 / (s * s) })
        })
        .unzip();

    let full = subset_fit(&n_c, &y, &w, &[0, 1])
        .ok_or_else(|| SweepError::Degenerate("heating design has a zero column".into()))?;
    if full.condition > HEATING_CONDITION_LIMIT {
        return Err(SweepError::Degenerate(format!(
            "heating design condition number {:.3e} exceeds {HEATING_CONDITION_LIMIT:e}",
            full.condition
        )));
    }
    let full_cov = full.scaled_covariance();
    let unconstrained = [full.beta[0], full.beta[1]];
    let full_sigma = [full_cov[(0, 0)].max(0.0).sqrt(), full_cov[(1, 1)].max(0.0).sqrt()];

    let (alpha, sigma, clipped, chi2, dof) = if unconstrained.iter().all(|a| *a >= 0.0) {
        (unconstrained, full_sigma, Vec::new(), full.chi2, full.dof)
    } else {
        // Best feasible single-coefficient model, else no heating at all.
        let zero_chi2: f64 = y.iter().zip(&w).map(|(y, w)| w * y * y).sum();
        let mut best = (
            [0.0, 0.0],
            full_sigma,
            vec!["alpha1".to_string(), "alpha2".to_string()],
            zero_chi2,
            points.len(),
        );
        for (keep, drop) in [(0usize, "alpha2"), (1usize, "alpha1")] {
            if let Some(f) = subset_fit(&n_c, &y, &w, &[keep]) {
                if f.beta[0] >= 0.0 && f.chi2 < best.3 {
                    let mut a = [0.0, 0.0];
                    a[keep] = f.beta[0];
                    let mut s = full_sigma;
                    s[keep] = f.scaled_covariance()[(0, 0)].max(0.0).sqrt();
                    best = (a, s, vec![drop.to_string()], f.chi2, f.dof);
                }
            }
        }
        best
    };

    Ok(HeatingFit {
        model: HeatingModel {
            alpha1: alpha[0],
            alpha2: alpha[1],
            alpha1_sigma: sigma[0],
            alpha2_sigma: sigma[1],
        },
        unconstrained,
        clipped,
        reduced_chi2: if dof == 0 { f64::NAN } else { chi2 / dof as f64 },
        dof,
        points: points.len(),
        condition: full.condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweeps::theory::{logspace, single_tone_drive};

    fn points(params: &SystemParams, h: &HeatingModel, n_c: &[f64], rel_sigma: f64) -> Vec<HeatingPoint> {
        n_c.iter()
            .map(|&n| {
                let drive = single_tone_drive(params, -params.omega_m, n);
                let n_f = model::occupancy_with_heating(params, &drive, h).unwrap();
                HeatingPoint {
                    drive,
                    n_f,
                    sigma: rel_sigma * n_f,
                }
            })
            .collect()
    }

    #[test]
    fn no_heating_gives_zero() {
        let p = SystemParams::demo();
        let pts = points(&p, &HeatingModel::default(), &logspace(50.0, 1000.0, 8), 0.01);
        let fit = fit_heating(&pts, &p).unwrap();
        assert!(fit.model.alpha1.abs() < 1e-12 && fit.model.alpha2.abs() < 1e-15);
    }

    #[test]
    fn noiseless_quadratic_recovered() {
        let p = SystemParams::demo();
        let h = HeatingModel::new(0.0, 1.2e-6);
        let fit = fit_heating(&points(&p, &h, &logspace(100.0, 1500.0, 10), 0.01), &p).unwrap();
        assert!((fit.model.alpha2 - 1.2e-6).abs() < 1e-12);
        assert!(fit.model.alpha1.abs() < 1e-10);
    }

    #[test]
    fn pure_linear_not_swapped() {
        let p = SystemParams::demo();
        let h = HeatingModel::new(1e-3, 0.0);
        let fit = fit_heating(&points(&p, &h, &logspace(100.0, 1500.0, 10), 0.01), &p).unwrap();
        assert!((fit.model.alpha1 - 1e-3).abs() < 1e-9);
        assert!(fit.model.alpha2.abs() < 1e-12);
    }

    #[test]
    fn negative_coefficient_is_clipped_and_refit() {
        let p = SystemParams::demo();
        // Data generated with a negative linear term: the constrained fit
        // drops α₁ and keeps a nonnegative α₂.
        let n_c = logspace(100.0, 1500.0, 10);
        let mut pts = points(&p, &HeatingModel::new(0.0, 1.2e-6), &n_c, 0.01);
        for pt in &mut pts {
            let gamma_eff = model::effective_damping(&p, &pt.drive);
            pt.n_f -= 1e-4 * pt.drive.n_c * p.gamma_m / gamma_eff;
        }
        let fit = fit_heating(&pts, &p).unwrap();
        assert!(fit.unconstrained[0] < 0.0);
        assert_eq!(fit.model.alpha1, 0.0);
        assert!(fit.model.alpha2 > 0.0);
        assert_eq!(fit.clipped, vec!["alpha1".to_string()]);
    }

    #[test]
    fn preconditions() {
        let p = SystemParams::demo();
        let h = HeatingModel::new(0.0, 1.2e-6);
        assert!(matches!(
            fit_heating(&points(&p, &h, &[100.0, 200.0, 300.0], 0.01), &p),
            Err(SweepError::InsufficientRuns { .. })
        ));
        assert!(matches!(
            fit_heating(&points(&p, &h, &logspace(300.0, 600.0, 6), 0.01), &p),
            Err(SweepError::Degenerate(_))
        ));
    }
}
