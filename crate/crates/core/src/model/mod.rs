//! Closed-form theory of the linearized two-tone optomechanical system.
//!
//! Conventions: the cooling tone sits at `Δ − Ω_m − δ` from the cavity and
//! the blue probe at `Δ + Ω_m + δ`. In the resolved-sideband form the
//! cooling tone scatters through `(Δ − δ)` and the probe through `(Δ + δ)`.
//! All functions are pure; nothing here allocates or holds state.

mod params;
mod susceptibility;

pub use params::{DeviceHz, DriveConfig, HeatingModel, SystemParams};
pub use susceptibility::{
    chi_c, chi_c_inverse, chi_m, chi_m_inverse, exact_effective_susceptibility, lorentzian_effective_susceptibility,
    ExactResponse, Response,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ratio `Γ_opt / κ` above which the weak-coupling formulas are flagged.
pub const WEAK_COUPLING_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("not a cooling configuration: effective damping {gamma_eff:e} rad/s is not positive")]
    Unstable { gamma_eff: f64 },
    #[error("net Raman damping {gamma_opt:e} rad/s is not positive")]
    NoNetCooling { gamma_opt: f64 },
    #[error("heterodyne ordering 0 < -delta < delta_lo violated (delta = {delta:e}, delta_lo = {delta_lo:e} rad/s)")]
    HeterodyneOrdering { delta: f64, delta_lo: f64 },
}

/// Resonant scattering rates `Γ_b` (Stokes, blue probe) and `Γ_c`
/// (anti-Stokes, cooling tone).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringRates {
    pub gamma_b: f64,
    pub gamma_c: f64,
}

impl ScatteringRates {
    /// Resolved-sideband net damping `Γ_c − Γ_b`.
    pub fn gamma_opt(&self) -> f64 {
        self.gamma_c - self.gamma_b
    }
}

/// Off-resonant Raman rates: anti-Stokes from the blue probe, Stokes from
/// the cooling tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamanRates {
    pub gamma_as_b: f64,
    pub gamma_s_c: f64,
}

#[inline]
fn lorentz_rate(n: f64, g0: f64, kappa: f64, detuning: f64) -> f64 {
    n * g0 * g0 * kappa / (0.25 * kappa * kappa + detuning * detuning)
}

#[inline]
fn dispersive_shift(n: f64, g0: f64, kappa: f64, detuning: f64) -> f64 {
    n * g0 * g0 * detuning / (0.25 * kappa * kappa + detuning * detuning)
}

/// `Γ_{b(c)} = n̄_{b(c)} g₀² κ / (κ²/4 + (Δ ± δ)²)`.
pub fn scattering_rates(params: &SystemParams, drive: &DriveConfig) -> ScatteringRates {
    ScatteringRates {
        gamma_b: lorentz_rate(drive.n_b, params.g0, params.kappa, drive.delta_mean + drive.delta),
        gamma_c: lorentz_rate(drive.n_c, params.g0, params.kappa, drive.delta_mean - drive.delta),
    }
}

/// Counter-rotating Raman rates, detuned by a further `±2Ω_m`.
pub fn raman_rates(params: &SystemParams, drive: &DriveConfig) -> RamanRates {
    let two_omega = 2.0 * params.omega_m;
    RamanRates {
        gamma_as_b: lorentz_rate(
            drive.n_b,
            params.g0,
            params.kappa,
            drive.delta_mean + drive.delta + two_omega,
        ),
        gamma_s_c: lorentz_rate(
            drive.n_c,
            params.g0,
            params.kappa,
            drive.delta_mean - drive.delta - two_omega,
        ),
    }
}

/// Net damping including the counter-rotating Raman processes,
/// `Γ^AS_b + Γ_c − Γ_b − Γ^S_c`.
pub fn raman_net_damping(params: &SystemParams, drive: &DriveConfig) -> f64 {
    let s = scattering_rates(params, drive);
    let r = raman_rates(params, drive);
    (r.gamma_as_b + s.gamma_c) - (s.gamma_b + r.gamma_s_c)
}

/// Optical spring shift `δΩ_m` (weak coupling).
pub fn spring_shift(params: &SystemParams, drive: &DriveConfig) -> f64 {
    dispersive_shift(drive.n_b, params.g0, params.kappa, drive.delta_mean + drive.delta)
        + dispersive_shift(drive.n_c, params.g0, params.kappa, drive.delta_mean - drive.delta)
}

/// Effective mechanical damping `Γ_m + Γ_c − Γ_b`.
pub fn effective_damping(params: &SystemParams, drive: &DriveConfig) -> f64 {
    params.gamma_m + scattering_rates(params, drive).gamma_opt()
}

fn positive_damping(params: &SystemParams, drive: &DriveConfig) -> Result<(ScatteringRates, f64), ModelError> {
    let rates = scattering_rates(params, drive);
    let gamma_eff = params.gamma_m + rates.gamma_opt();
    if gamma_eff > 0.0 {
        Ok((rates, gamma_eff))
    } else {
        Err(ModelError::Unstable { gamma_eff })
    }
}

/// Mean final phonon occupancy `(Γ_m n̄_th + Γ_b) / Γ_eff`.
pub fn final_occupancy(params: &SystemParams, drive: &DriveConfig) -> Result<f64, ModelError> {
    let (rates, gamma_eff) = positive_damping(params, drive)?;
    Ok((params.gamma_m * params.n_th + rates.gamma_b) / gamma_eff)
}

/// Quantum-backaction floor from detailed balance of all four Raman
/// processes, `(Γ^S_c + Γ_b) / Γ_opt` with the full Raman net damping.
pub fn min_occupancy(params: &SystemParams, drive: &DriveConfig) -> Result<f64, ModelError> {
    let s = scattering_rates(params, drive);
    let r = raman_rates(params, drive);
    let gamma_opt = (r.gamma_as_b + s.gamma_c) - (s.gamma_b + r.gamma_s_c);
    if gamma_opt > 0.0 {
        Ok((r.gamma_s_c + s.gamma_b) / gamma_opt)
    } else {
        Err(ModelError::NoNetCooling { gamma_opt })
    }
}

/// Zero-point weight of the dressed mode,
/// `β̃ = (α (Γ_c − Γ_b) + Γ_m β) / Γ_eff`.
pub fn dressed_zpf(params: &SystemParams, drive: &DriveConfig) -> Result<f64, ModelError> {
    let (rates, gamma_eff) = positive_damping(params, drive)?;
    Ok((params.alpha_opt * rates.gamma_opt() + params.gamma_m * params.beta_mech) / gamma_eff)
}

/// Final occupancy with absorption heating added to the bath:
/// `((n̄_th + α₁n̄_c + α₂n̄_c²) Γ_m + Γ_b) / Γ_eff`.
pub fn occupancy_with_heating(
    params: &SystemParams,
    drive: &DriveConfig,
    heating: &HeatingModel,
) -> Result<f64, ModelError> {
    let (rates, gamma_eff) = positive_damping(params, drive)?;
    let bath = params.n_th + heating.excess_occupancy(drive.n_c);
    Ok((bath * params.gamma_m + rates.gamma_b) / gamma_eff)
}

/// Derived dynamical quantities of one drive configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedState {
    pub gamma_b: f64,
    pub gamma_c: f64,
    pub gamma_opt: f64,
    pub gamma_eff: f64,
    pub spring_shift: f64,
    pub omega_eff: f64,
    pub n_f: f64,
    /// `None` when the Raman processes give no net damping.
    pub n_min: Option<f64>,
    pub beta_dressed: f64,
    pub gamma_as_b: f64,
    pub gamma_s_c: f64,
    /// Set when `Γ_opt / κ` exceeds [`WEAK_COUPLING_LIMIT`]; the Lorentzian
    /// and spring-shift formulas are then outside their regime.
    pub strong_coupling: bool,
}

pub fn dressed_state(params: &SystemParams, drive: &DriveConfig) -> Result<DressedState, ModelError> {
    let (rates, gamma_eff) = positive_damping(params, drive)?;
    let raman = raman_rates(params, drive);
    let shift = spring_shift(params, drive);
    let gamma_opt = rates.gamma_opt();
    Ok(DressedState {
        gamma_b: rates.gamma_b,
        gamma_c: rates.gamma_c,
        gamma_opt,
        gamma_eff,
        spring_shift: shift,
        omega_eff: params.omega_m + shift,
        n_f: final_occupancy(params, drive)?,
        n_min: min_occupancy(params, drive).ok(),
        beta_dressed: dressed_zpf(params, drive)?,
        gamma_as_b: raman.gamma_as_b,
        gamma_s_c: raman.gamma_s_c,
        strong_coupling: gamma_opt.abs() / params.kappa > WEAK_COUPLING_LIMIT,
    })
}
