//! Signal-to-noise ratio of the cooling sideband and the detection
//! efficiency regression.
//!
//! The SNR is the fitted peak height above the background,
//! `SNR = 4η(n̄_th + α₁n̄_c + α₂n̄_c²) X/(X+1)²` with
//! `X = n̄_c C₀ (κ/2)² / ((κ/2)² + (Δ_c + Ω_m)²) = Γ_c/Γ_m`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{HeatingModel, SystemParams};

use super::linear::weighted_least_squares;
use super::SweepError;

/// Condition number limit for the joint (η, α₂) design.
pub const SNR_CONDITION_LIMIT: f64 = 1e8;

/// Measured single-tone SNR at one drive point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub n_c: f64,
    /// Cooling-tone detuning (rad/s).
    pub delta_c: f64,
    pub snr: f64,
    /// 1σ uncertainty of `snr`; zero for every point selects unweighted
    /// least squares.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrModel {
    pub eta: f64,
    pub eta_sigma: f64,
    pub heating: HeatingModel,
    /// Vacuum cooperativity `C₀`.
    pub c0: f64,
}

/// Cooperativity-like ratio `X = Γ_c/Γ_m` for a single tone.
pub fn sideband_cooperativity(params: &SystemParams, n_c: f64, delta_c: f64) -> f64 {
    let hk2 = 0.25 * params.kappa * params.kappa;
    let d = delta_c + params.omega_m;
    n_c * params.vacuum_cooperativity() * hk2 / (hk2 + d * d)
}

/// `4 X/(X+1)²`, the SNR per unit `η · bath occupancy`.
fn shape(params: &SystemParams, n_c: f64, delta_c: f64) -> f64 {
    let x = sideband_cooperativity(params, n_c, delta_c);
    4.0 * x / ((x + 1.0) * (x + 1.0))
}

/// Model SNR of the cooling sideband for a single tone.
pub fn snr_theory(params: &SystemParams, n_c: f64, delta_c: f64, eta: f64, heating: &HeatingModel) -> f64 {
    eta * (params.n_th + heating.excess_occupancy(n_c)) * shape(params, n_c, delta_c)
}

impl SnrModel {
    pub fn snr(&self, params: &SystemParams, n_c: f64, delta_c: f64) -> f64 {
        snr_theory(params, n_c, delta_c, self.eta, &self.heating)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrFitMode {
    /// Only η is free; the heating model is held at the given values.
    FixedHeating(HeatingModel),
    /// η and α₂ are free, α₁ = 0.
    JointQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrFit {
    pub model: SnrModel,
    pub mode: SnrFitMode,
    /// Set when the joint fit returned α₂ < 0 and was refit with α₂ = 0.
    pub alpha2_clipped: bool,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub points: usize,
}

fn check_points(points: &[SnrPoint], min: usize) -> Result<bool, SweepError> {
    if points.len() < min {
        return Err(SweepError::InsufficientRuns {
            needed: min,
            got: points.len(),
        });
    }
    for p in points {
        if !(p.snr.is_finite() && p.sigma.is_finite() && p.sigma >= 0.0 && p.n_c > 0.0 && p.delta_c.is_finite()) {
            return Err(SweepError::InvalidInput(format!(
                "SNR point needs finite snr, sigma >= 0 and n_c > 0 (snr = {}, sigma = {}, n_c = {})",
                p.snr, p.sigma, p.n_c
            )));
        }
    }
    if points.iter().all(|p| p.snr == 0.0) {
        return Err(SweepError::Degenerate(
            "all SNR values are zero; η is not identifiable".into(),
        ));
    }
    let unweighted = points.iter().all(|p| p.sigma == 0.0);
    if !unweighted && points.iter().any(|p| p.sigma == 0.0) {
        return Err(SweepError::InvalidInput(
            "either all or no SNR points may have zero sigma".into(),
        ));
    }
    Ok(unweighted)
}

fn check_eta(eta: f64) -> Result<(), SweepError> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(SweepError::Degenerate(format!(
            "fitted detection efficiency {eta:.6e} is outside (0, 1]"
        )))
    }
}

/// Least-squares detection efficiency, optionally jointly with the
/// quadratic heating coefficient (α₂ ≥ 0 by projection).
pub fn fit_snr(points: &[SnrPoint], params: &SystemParams, mode: SnrFitMode) -> Result<SnrFit, SweepError> {
    params.validate()?;
    let min = match mode {
        SnrFitMode::FixedHeating(_) => 1,
        SnrFitMode::JointQuadratic => 3,
    };
    let unweighted = check_points(points, min)?;
    let y: Vec<f64> = points.iter().map(|p| p.snr).collect();
    let w: Vec<f64> = points
        .iter()
        .map(|p| if unweighted { 1.0 } else { 1.0 / (p.sigma * p.sigma) })
        .collect();
    let f: Vec<f64> = points.iter().map(|p| shape(params, p.n_c, p.delta_c)).collect();
    let c0 = params.vacuum_cooperativity();

    let fit_eta = |heating: HeatingModel| -> Result<(f64, f64, f64, usize), SweepError> {
        let x = DMatrix::from_fn(points.len(), 1, |i, _| {
            (params.n_th + heating.excess_occupancy(points[i].n_c)) * f[i]
        });
        let lf = weighted_least_squares(&x, &y, &w)
            .ok_or_else(|| SweepError::Degenerate("SNR design is identically zero".into()))?;
        let eta = lf.beta[0];
        check_eta(eta)?;
        Ok((eta, lf.scaled_covariance()[(0, 0)].max(0.0).sqrt(), lf.chi2, lf.dof))
    };
    let finish = |eta: f64, eta_sigma: f64, heating: HeatingModel, chi2: f64, dof: usize, clipped: bool| SnrFit {
        model: SnrModel {
            eta,
            eta_sigma,
            heating,
            c0,
        },
        mode,
        alpha2_clipped: clipped,
        reduced_chi2: if dof == 0 { f64::NAN } else { chi2 / dof as f64 },
        dof,
        points: points.len(),
    };

    match mode {
        SnrFitMode::FixedHeating(heating) => {
            let (eta, s, chi2, dof) = fit_eta(heating)?;
            Ok(finish(eta, s, heating, chi2, dof, false))
        }
        SnrFitMode::JointQuadratic => {
            // Linear in b = (η, η α₂).
            let x = DMatrix::from_fn(points.len(), 2, |i, j| {
                if j == 0 {
                    params.n_th * f[i]
                } else {
                    points[i].n_c * points[i].n_c * f[i]
                }
            });
            let lf = weighted_least_squares(&x, &y, &w)
                .ok_or_else(|| SweepError::Degenerate("SNR design has a zero column".into()))?;
            if lf.condition > SNR_CONDITION_LIMIT {
                return Err(SweepError::Degenerate(format!(
                    "SNR design condition number {:.3e} exceeds {SNR_CONDITION_LIMIT:e}",
                    lf.condition
                )));
            }
            let (b1, b2) = (lf.beta[0], lf.beta[1]);
            if b2 < 0.0 {
                let (eta, s, chi2, dof) = fit_eta(HeatingModel::default())?;
                return Ok(finish(eta, s, HeatingModel::default(), chi2, dof, true));
            }
            check_eta(b1)?;
            let cov = lf.scaled_covariance();
            let alpha2 = b2 / b1;
            // Delta method for α₂ = b₂/b₁.
            let (j1, j2) = (-b2 / (b1 * b1), 1.0 / b1);
            let var_a2 = j1 * j1 * cov[(0, 0)] + j2 * j2 * cov[(1, 1)] + 2.0 * j1 * j2 * cov[(0, 1)];
            let heating = HeatingModel {
                alpha1: 0.0,
                alpha2,
                alpha1_sigma: 0.0,
                alpha2_sigma: var_a2.max(0.0).sqrt(),
            };
            Ok(finish(b1, cov[(0, 0)].max(0.0).sqrt(), heating, lf.chi2, lf.dof, false))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;
    use crate::sweeps::theory::{linspace, single_tone_drive};
    use crate::units::hz_to_angular;

    fn curve(params: &SystemParams, eta: f64, h: &HeatingModel) -> Vec<SnrPoint> {
        linspace(hz_to_angular(-7.2e9), hz_to_angular(-3.2e9), 12)
            .into_iter()
            .map(|d| {
                let n_c = params.intracavity_photons(500e-6, 0.4, d, 1.54e-6);
                let snr = snr_theory(params, n_c, d, eta, h);
                SnrPoint {
                    n_c,
                    delta_c: d,
                    snr,
                    sigma: 0.02 * snr,
                }
            })
            .collect()
    }

    #[test]
    fn matches_heterodyne_peak_height() {
        let p = SystemParams::demo();
        let h = HeatingModel::new(0.0, 1.2e-6);
        let d = hz_to_angular(-4.5e9);
        let drive = single_tone_drive(&p, d, 700.0);
        let rates = model::scattering_rates(&p, &drive);
        let n_f = model::occupancy_with_heating(&p, &drive, &h).unwrap();
        let peak = 4.0 * 0.064 * rates.gamma_c * n_f / model::effective_damping(&p, &drive);
        let snr = snr_theory(&p, 700.0, d, 0.064, &h);
        assert!((snr - peak).abs() / peak < 1e-12);
    }

    #[test]
    fn saturation_limit() {
        let p = SystemParams::demo();
        let h = HeatingModel::default();
        let n_c = 2000.0;
        assert!(sideband_cooperativity(&p, n_c, -p.omega_m) > 99.0);
        let n_f = model::final_occupancy(&p, &single_tone_drive(&p, -p.omega_m, n_c)).unwrap();
        let snr = snr_theory(&p, n_c, -p.omega_m, 0.064, &h);
        assert!((snr / (4.0 * 0.064 * n_f) - 1.0).abs() < 0.01);
    }

    #[test]
    fn recovers_eta_with_fixed_heating() {
        let p = SystemParams::demo();
        let h = HeatingModel::new(0.0, 1.2e-6);
        let fit = fit_snr(&curve(&p, 0.064, &h), &p, SnrFitMode::FixedHeating(h)).unwrap();
        assert!((fit.model.eta - 0.064).abs() < 1e-12);
    }

    #[test]
    fn recovers_eta_and_alpha2_jointly() {
        let p = SystemParams::demo();
        let h = HeatingModel::new(0.0, 1.2e-6);
        let fit = fit_snr(&curve(&p, 0.064, &h), &p, SnrFitMode::JointQuadratic).unwrap();
        assert!((fit.model.eta - 0.064).abs() < 1e-10);
        assert!((fit.model.heating.alpha2 - 1.2e-6).abs() < 1e-12);
    }

    #[test]
    fn zero_efficiency_is_degenerate() {
        let p = SystemParams::demo();
        let pts: Vec<SnrPoint> = curve(&p, 0.0, &HeatingModel::default());
        for mode in [
            SnrFitMode::FixedHeating(HeatingModel::default()),
            SnrFitMode::JointQuadratic,
        ] {
            assert!(matches!(fit_snr(&pts, &p, mode), Err(SweepError::Degenerate(_))));
        }
    }
}
