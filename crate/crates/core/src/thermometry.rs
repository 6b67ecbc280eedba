//! Phonon occupancy from fitted sideband areas.
//!
//! Three estimators share one error model:
//!
//! * sideband asymmetry of a two-tone spectrum, which also yields the
//!   calibration coefficient `C_cal = A₂/Γ_b − A₁/Γ_c`;
//! * single-tone area divided by `Γ_c C_cal` with a pooled calibration;
//! * single-tone area relative to a thermalized anchor run.
//!
//! Uncertainties combine, in quadrature, the fit covariance, the calibration
//! or anchor uncertainty and the sensitivity to the tone-pair detuning
//! (finite differences at ±σ_Δ). The detuning term is kept one-sided, so the
//! lower and upper bounds can differ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{FitMode, LorentzianFitResult, LorentzianParam};
use crate::model::{self, DriveConfig, ModelError, SystemParams};
use crate::units::{angular_to_hz, hz_to_angular};

/// Default tone-pair detuning uncertainty, Hz.
pub const DEFAULT_DETUNING_SIGMA_HZ: f64 = 10e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermoError {
    #[error("unphysical asymmetry: A₂/Γ_b = {probe:.6e} does not exceed A₁/Γ_c = {cooling:.6e}")]
    NegativeOccupancy { cooling: f64, probe: f64 },
    #[error("calibrations come from different coupling sessions: {0:?}")]
    MixedConfigurations(Vec<String>),
    #[error("calibrations were obtained by different methods")]
    MixedMethods,
    #[error("pooling needs at least 2 calibrations, got {0}")]
    InsufficientRuns(usize),
    #[error("anchor implies Γ_m/2π = {gamma_m_hz:.6e} Hz <= 0")]
    AnchorInconsistent { gamma_m_hz: f64 },
    #[error("expected a {expected:?}-mode fit")]
    WrongFitMode { expected: FitMode },
    #[error("occupancy from calibration needs an ancillary-quantum calibration")]
    WrongCalibrationMethod,
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    /// From two-tone sideband asymmetry (self-calibrated).
    AncillaryQuantum,
    /// From a thermalized anchor run.
    NoiseAnchored,
}

/// Detection coefficient linking `A/Γ` to phonon occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_cal: f64,
    pub c_cal_sigma: f64,
    pub source_runs: Vec<String>,
    pub method: CalibrationMethod,
    /// Fiber-coupling session the calibration belongs to.
    pub session: String,
}

impl Calibration {
    pub fn tagged(mut self, run_id: impl Into<String>, session: impl Into<String>) -> Self {
        self.source_runs = vec![run_id.into()];
        self.session = session.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupancyMethod {
    Asymmetry,
    Calibrated,
    NoiseAnchored,
}

/// Inputs and error budget behind an estimate, ordinary-frequency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateInputs {
    /// Area of the sideband used, `A/2π` (PSD × Hz).
    pub area_hz: f64,
    pub area_sigma_hz: f64,
    /// Scattering rate paired with that area, `Γ/2π`.
    pub gamma_s_hz: f64,
    pub delta_c_hz: f64,
    pub delta_c_sigma_hz: f64,
    pub sigma_fit: f64,
    pub sigma_calibration: f64,
    pub sigma_detuning_lo: f64,
    pub sigma_detuning_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEstimate {
    pub n_f: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub method: OccupancyMethod,
    pub inputs: EstimateInputs,
}

impl OccupancyEstimate {
    /// Whether `value` lies within `k` combined standard deviations.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        let d = value - self.n_f;
        if d >= 0.0 {
            d <= k * self.sigma_hi
        } else {
            -d <= k * self.sigma_lo
        }
    }

    /// Symmetric stand-in for the asymmetric bounds.
    pub fn sigma(&self) -> f64 {
        0.5 * (self.sigma_lo + self.sigma_hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoOptions {
    /// Tone-pair detuning uncertainty (rad/s) used for the sensitivity term.
    pub detuning_sigma: f64,
}

impl Default for ThermoOptions {
    fn default() -> Self {
        Self {
            detuning_sigma: hz_to_angular(DEFAULT_DETUNING_SIGMA_HZ),
        }
    }
}

/// One-sided deviations `(lo, hi)` of `f` when the drive moves by ±σ_Δ.
fn detuning_sensitivity<F>(drive: &DriveConfig, sigma: f64, central: f64, f: F) -> (f64, f64)
where
    F: Fn(&DriveConfig) -> Option<f64>,
{
    if sigma == 0.0 {
        return (0.0, 0.0);
    }
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for s in [-sigma, sigma] {
        match f(&drive.shifted(s)) {
            Some(v) => {
                let d = v - central;
                if d > 0.0 {
                    hi = hi.max(d);
                } else {
                    lo = lo.max(-d);
                }
            }
            None => {
                hi = f64::INFINITY;
                lo = lo.max(central);
            }
        }
    }
    (lo, hi)
}

fn combine(parts: &[f64], detuning: (f64, f64)) -> (f64, f64) {
    let base: f64 = parts.iter().map(|p| p * p).sum();
    (
        (base + detuning.0 * detuning.0).sqrt(),
        (base + detuning.1 * detuning.1).sqrt(),
    )
}

fn require_mode(fit: &LorentzianFitResult, mode: FitMode) -> Result<(), ThermoError> {
    if fit.mode == mode {
        Ok(())
    } else {
        Err(ThermoError::WrongFitMode { expected: mode })
    }
}

fn asymmetry_point(
    a1: f64,
    a2: f64,
    params: &SystemParams,
    drive: &DriveConfig,
) -> Result<(f64, f64, f64, f64), ThermoError> {
    let rates = model::scattering_rates(params, drive);
    if !(rates.gamma_b > 0.0 && rates.gamma_c > 0.0) {
        return Err(ThermoError::InvalidInput(
            "asymmetry needs both tones on (Γ_b, Γ_c > 0)".into(),
        ));
    }
    let r1 = a1 / rates.gamma_c;
    let r2 = a2 / rates.gamma_b;
    if r2 <= r1 {
        return Err(ThermoError::NegativeOccupancy { cooling: r1, probe: r2 });
    }
    Ok((r1 / (r2 - r1), r2 - r1, rates.gamma_c, rates.gamma_b))
}

/// Occupancy and calibration coefficient from a two-tone fit:
/// `n̄_f = (A₁/Γ_c) / (A₂/Γ_b − A₁/Γ_c)`, `C_cal = A₂/Γ_b − A₁/Γ_c`.
///
/// The returned calibration has no run or session tag; see
/// [`Calibration::tagged`].
pub fn occupancy_from_asymmetry(
    fit: &LorentzianFitResult,
    params: &SystemParams,
    drive: &DriveConfig,
    options: &ThermoOptions,
) -> Result<(OccupancyEstimate, Calibration), ThermoError> {
    require_mode(fit, FitMode::Double)?;
    let a1 = fit.area1();
    let a2 = fit.area2().unwrap_or(0.0);
    let (n_f, c_cal, gamma_c, gamma_b) = asymmetry_point(a1, a2, params, drive)?;

    use LorentzianParam::{Area1, Area2};
    let r1 = a1 / gamma_c;
    let r2 = a2 / gamma_b;
    let d2 = (r2 - r1) * (r2 - r1);
    let (j1, j2) = (r2 / (gamma_c * d2), -r1 / (gamma_b * d2));
    let var_n =
        j1 * j1 * fit.cov(Area1, Area1) + j2 * j2 * fit.cov(Area2, Area2) + 2.0 * j1 * j2 * fit.cov(Area1, Area2);
    let (k1, k2) = (-1.0 / gamma_c, 1.0 / gamma_b);
    let var_c =
        k1 * k1 * fit.cov(Area1, Area1) + k2 * k2 * fit.cov(Area2, Area2) + 2.0 * k1 * k2 * fit.cov(Area1, Area2);
    let sigma_fit = var_n.max(0.0).sqrt();

    let det = detuning_sensitivity(drive, options.detuning_sigma, n_f, |d| {
        asymmetry_point(a1, a2, params, d).ok().map(|p| p.0)
    });
    let det_c = detuning_sensitivity(drive, options.detuning_sigma, c_cal, |d| {
        asymmetry_point(a1, a2, params, d).ok().map(|p| p.1)
    });
    let (sigma_lo, sigma_hi) = combine(&[sigma_fit], det);

    let estimate = OccupancyEstimate {
        n_f,
        sigma_lo,
        sigma_hi,
        method: OccupancyMethod::Asymmetry,
        inputs: EstimateInputs {
            area_hz: angular_to_hz(a1),
            area_sigma_hz: angular_to_hz(fit.sigma(Area1)),
            gamma_s_hz: angular_to_hz(gamma_c),
            delta_c_hz: angular_to_hz(drive.cooling_detuning(params)),
            delta_c_sigma_hz: angular_to_hz(options.detuning_sigma),
            sigma_fit,
            sigma_calibration: 0.0,
            sigma_detuning_lo: det.0,
            sigma_detuning_hi: det.1,
        },
    };
    let calibration = Calibration {
        c_cal,
        c_cal_sigma: (var_c.max(0.0) + det_c.0.max(det_c.1).powi(2)).sqrt(),
        source_runs: Vec::new(),
        method: CalibrationMethod::AncillaryQuantum,
        session: String::new(),
    };
    Ok((estimate, calibration))
}

/// Mean of several calibrations, with their sample standard deviation as
/// uncertainty. All inputs must share a session tag and a method.
pub fn pool_calibration(calibrations: &[Calibration]) -> Result<Calibration, ThermoError> {
    if calibrations.len() < 2 {
        return Err(ThermoError::InsufficientRuns(calibrations.len()));
    }
    let first = &calibrations[0];
    if calibrations.iter().any(|c| c.session != first.session) {
        let mut sessions: Vec<String> = calibrations.iter().map(|c| c.session.clone()).collect();
        sessions.sort();
        sessions.dedup();
        return Err(ThermoError::MixedConfigurations(sessions));
    }
    if calibrations.iter().any(|c| c.method != first.method) {
        return Err(ThermoError::MixedMethods);
    }
    let n = calibrations.len() as f64;
    let mean = calibrations.iter().map(|c| c.c_cal).sum::<f64>() / n;
    let var = calibrations.iter().map(|c| (c.c_cal - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Calibration {
        c_cal: mean,
        c_cal_sigma: var.sqrt(),
        source_runs: calibrations
            .iter()
            .flat_map(|c| c.source_runs.iter().cloned())
            .collect(),
        method: first.method,
        session: first.session.clone(),
    })
}

/// `n̄_f = A_s / (Γ_s C_cal)` for a single-tone fit, with `Γ_s = Γ_c` of the
/// run's drive.
pub fn occupancy_from_calibration(
    fit: &LorentzianFitResult,
    params: &SystemParams,
    drive: &DriveConfig,
    cal: &Calibration,
    options: &ThermoOptions,
) -> Result<OccupancyEstimate, ThermoError> {
    require_mode(fit, FitMode::Single)?;
    if cal.method != CalibrationMethod::AncillaryQuantum {
        return Err(ThermoError::WrongCalibrationMethod);
    }
    if !(cal.c_cal > 0.0) {
        return Err(ThermoError::InvalidInput(format!(
            "C_cal must be positive, got {}",
            cal.c_cal
        )));
    }
    let gamma_s = |d: &DriveConfig| model::scattering_rates(params, d).gamma_c;
    let g = gamma_s(drive);
    if !(g > 0.0) {
        return Err(ThermoError::InvalidInput("cooling tone is off (Γ_c = 0)".into()));
    }
    let area = fit.area1();
    let area_sigma = fit.sigma(LorentzianParam::Area1);
    let n_f = area / (g * cal.c_cal);
    let sigma_fit = area_sigma / (g * cal.c_cal);
    let sigma_cal = n_f * cal.c_cal_sigma / cal.c_cal;
    let det = detuning_sensitivity(drive, options.detuning_sigma, n_f, |d| {
        let gs = gamma_s(d);
        (gs > 0.0).then(|| area / (gs * cal.c_cal))
    });
    let (sigma_lo, sigma_hi) = combine(&[sigma_fit, sigma_cal], det);
    Ok(OccupancyEstimate {
        n_f,
        sigma_lo,
        sigma_hi,
        method: OccupancyMethod::Calibrated,
        inputs: EstimateInputs {
            area_hz: angular_to_hz(area),
            area_sigma_hz: angular_to_hz(area_sigma),
            gamma_s_hz: angular_to_hz(g),
            delta_c_hz: angular_to_hz(drive.cooling_detuning(params)),
            delta_c_sigma_hz: angular_to_hz(options.detuning_sigma),
            sigma_fit,
            sigma_calibration: sigma_cal,
            sigma_detuning_lo: det.0,
            sigma_detuning_hi: det.1,
        },
    })
}

/// A run assumed thermalized with the cryostat, used as the reference for
/// noise thermometry. All rates angular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseAnchor {
    /// Sideband area `A_s⁰` of the anchor run.
    pub area: f64,
    pub area_sigma: f64,
    /// Optomechanical damping `Γ_s⁰` at the anchor drive.
    pub gamma_s0: f64,
    pub temperature: f64,
    pub gamma_m: f64,
    pub gamma_m_sigma: f64,
}

impl NoiseAnchor {
    /// Build an anchor from its own single-tone fit, inferring
    /// `Γ_m = Γ_eff⁰ − Γ_s⁰`.
    pub fn from_fit(
        fit: &LorentzianFitResult,
        params: &SystemParams,
        drive: &DriveConfig,
        temperature: f64,
    ) -> Result<Self, ThermoError> {
        require_mode(fit, FitMode::Single)?;
        let gamma_s0 = model::scattering_rates(params, drive).gamma_c;
        let gm = infer_gamma_m_from_rates(fit.gamma_eff(), fit.sigma(LorentzianParam::GammaEff), gamma_s0);
        if gm.nonphysical {
            return Err(ThermoError::AnchorInconsistent {
                gamma_m_hz: angular_to_hz(gm.gamma_m),
            });
        }
        Ok(Self {
            area: fit.area1(),
            area_sigma: fit.sigma(LorentzianParam::Area1),
            gamma_s0,
            temperature,
            gamma_m: gm.gamma_m,
            gamma_m_sigma: gm.sigma,
        })
    }
}

/// Noise-anchored occupancy
/// `n̄_f = (A_s/Γ_s)/(A_s⁰/Γ_s⁰) · n̄_th(T) · Γ_m/(Γ_s⁰ + Γ_m)`.
pub fn occupancy_noise_anchored(
    fit: &LorentzianFitResult,
    params: &SystemParams,
    drive: &DriveConfig,
    anchor: &NoiseAnchor,
    options: &ThermoOptions,
) -> Result<OccupancyEstimate, ThermoError> {
    require_mode(fit, FitMode::Single)?;
    if !(anchor.gamma_m > 0.0) {
        return Err(ThermoError::AnchorInconsistent {
            gamma_m_hz: angular_to_hz(anchor.gamma_m),
        });
    }
    if !(anchor.area > 0.0 && anchor.gamma_s0 >= 0.0) {
        return Err(ThermoError::InvalidInput("anchor area must be positive".into()));
    }
    let gamma_s = |d: &DriveConfig| model::scattering_rates(params, d).gamma_c;
    let g = gamma_s(drive);
    if !(g > 0.0) {
        return Err(ThermoError::InvalidInput("cooling tone is off (Γ_c = 0)".into()));
    }
    let n_th = params.convention.occupancy(anchor.temperature, params.omega_m);
    let back_out = anchor.gamma_m / (anchor.gamma_s0 + anchor.gamma_m);
    let reference = anchor.area / anchor.gamma_s0.max(f64::MIN_POSITIVE);
    let scale = |gs: f64| n_th * back_out / (gs * reference);
    let area = fit.area1();
    let area_sigma = fit.sigma(LorentzianParam::Area1);
    let n_f = area * scale(g);

    let sigma_fit = area_sigma * scale(g);
    let d_backout = anchor.gamma_s0 / (anchor.gamma_s0 + anchor.gamma_m).powi(2);
    let sigma_anchor = n_f
        * ((anchor.area_sigma / anchor.area).powi(2) + (d_backout * anchor.gamma_m_sigma / back_out).powi(2)).sqrt();
    let det = detuning_sensitivity(drive, options.detuning_sigma, n_f, |d| {
        let gs = gamma_s(d);
        (gs > 0.0).then(|| area * scale(gs))
    });
    let (sigma_lo, sigma_hi) = combine(&[sigma_fit, sigma_anchor], det);
    Ok(OccupancyEstimate {
        n_f,
        sigma_lo,
        sigma_hi,
        method: OccupancyMethod::NoiseAnchored,
        inputs: EstimateInputs {
            area_hz: angular_to_hz(area),
            area_sigma_hz: angular_to_hz(area_sigma),
            gamma_s_hz: angular_to_hz(g),
            delta_c_hz: angular_to_hz(drive.cooling_detuning(params)),
            delta_c_sigma_hz: angular_to_hz(options.detuning_sigma),
            sigma_fit,
            sigma_calibration: sigma_anchor,
            sigma_detuning_lo: det.0,
            sigma_detuning_hi: det.1,
        },
    })
}

/// Intrinsic damping inferred from a fitted linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaMEstimate {
    pub gamma_m: f64,
    pub sigma: f64,
    /// `Γ_m ≤ 0`: reported as is, never clamped.
    pub nonphysical: bool,
}

/// `Γ_m = Γ_eff − Γ_c` with the uncertainty of `Γ_eff`.
pub fn infer_gamma_m_from_rates(gamma_eff: f64, gamma_eff_sigma: f64, gamma_c: f64) -> GammaMEstimate {
    let gamma_m = gamma_eff - gamma_c;
    GammaMEstimate {
        gamma_m,
        sigma: gamma_eff_sigma,
        nonphysical: gamma_m <= 0.0,
    }
}

/// `Γ_m = Γ_eff − Γ_c(params, drive)` from a single-tone fit.
pub fn infer_gamma_m(
    fit: &LorentzianFitResult,
    params: &SystemParams,
    drive: &DriveConfig,
) -> Result<GammaMEstimate, ThermoError> {
    require_mode(fit, FitMode::Single)?;
    let gamma_c = model::scattering_rates(params, drive).gamma_c;
    Ok(infer_gamma_m_from_rates(
        fit.gamma_eff(),
        fit.sigma(LorentzianParam::GammaEff),
        gamma_c,
    ))
}
