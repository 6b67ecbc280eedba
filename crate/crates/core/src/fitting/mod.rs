//! Nonlinear least-squares estimation: shared-width Lorentzian sideband fits
//! and coherent cavity-response (OMIT) fits, both on a hand-written
//! Levenberg–Marquardt solver.

pub mod coherent;
pub mod lm;
pub mod lorentzian;

pub use coherent::{
    fit_coherent_response, omit_reflection, CoherentInit, CoherentResponseFit, CoherentTrace, OmitInit, OmitParams,
    TraceData, DETUNING_SIGMA_FLOOR_HZ,
};
pub use lm::{Convergence, LmOptions};
pub use lorentzian::{
    fit_lorentzians, FitMode, FitOptions, LorentzianFitResult, LorentzianParam, LorentzianParams, Weighting,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectra::SpectrumError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("fit did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("no bin exceeds the peak threshold {threshold:.6}")]
    PeakNotFound { threshold: f64 },
    #[error("sidebands {separation_hz:.6e} Hz apart overlap (Γ_eff/2π = {gamma_eff_hz:.6e} Hz)")]
    OverlappingSidebands { separation_hz: f64, gamma_eff_hz: f64 },
    #[error("peak at {center_hz:.6e} Hz is not covered by ±3 half-widths ({half_width_hz:.3e} Hz)")]
    PeakOutsideGrid { center_hz: f64, half_width_hz: f64 },
    #[error("trace cannot distinguish Δ_c/2π = ±{delta_c_hz:.6e} Hz")]
    AmbiguousDetuningSign { delta_c_hz: f64 },
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Solver diagnostics attached to every serialized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub convergence: Convergence,
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<Weighting>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// JSON form of a fit: dimensional values in Hz, 1σ uncertainties and the
/// row-major covariance over `names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub kind: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub covariance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<String>,
    pub diagnostics: FitDiagnostics,
}

impl FitRecord {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.values[i], self.sigmas[i]))
    }
}
