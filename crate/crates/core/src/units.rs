//! Physical constants and the Hz / rad·s⁻¹ boundary.
//!
//! Everything inside the crate is stored in angular units. Conversions to
//! ordinary frequency happen only where data enters or leaves (config files,
//! CSV/JSON records, the FFI surface).

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Reduced Planck constant, J·s (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_angular(f_hz: f64) -> f64 {
    f_hz * TAU
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// How a bath temperature maps to a mean phonon number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupancyConvention {
    /// High-temperature form `k_B T / (ħ Ω_m)`.
    #[default]
    RayleighJeans,
    /// Exact Bose–Einstein occupancy `1 / (exp(ħΩ_m / k_B T) − 1)`.
    Bose,
}

impl OccupancyConvention {
    /// Mean thermal occupancy of a mode at angular frequency `omega` (rad/s).
    pub fn occupancy(self, temperature_k: f64, omega: f64) -> f64 {
        if temperature_k <= 0.0 {
            return 0.0;
        }
        let x = HBAR * omega / (K_B * temperature_k);
        match self {
            Self::RayleighJeans => 1.0 / x,
            Self::Bose => 1.0 / x.exp_m1(),
        }
    }
}

/// Angular frequency of light at vacuum wavelength `lambda_m`.
pub fn optical_angular_frequency(lambda_m: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / lambda_m
}
