use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::units::{angular_to_hz, hz_to_angular, OccupancyConvention};

/// Static parameters of the cavity, the mechanical mode and their coupling.
///
/// All rates and frequencies are angular (rad/s). Build through
/// [`SystemParams::from_hz`] to get the derived fields (`kappa_0`, `gamma_m`,
/// `n_th`) filled in consistently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub kappa: f64,
    pub kappa_ex: f64,
    pub kappa_0: f64,
    pub omega_m: f64,
    pub gamma_int: f64,
    pub gamma_gas: f64,
    pub gamma_m: f64,
    pub g0: f64,
    pub temperature: f64,
    pub n_th: f64,
    /// Zero-point amplitude in metres; only scales displacement spectra.
    pub x_zpf: f64,
    pub alpha_opt: f64,
    pub beta_mech: f64,
    pub convention: OccupancyConvention,
}

fn one() -> f64 {
    1.0
}

/// User-facing device description in ordinary frequency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceHz {
    pub kappa_hz: f64,
    pub kappa_ex_hz: f64,
    pub omega_m_hz: f64,
    pub gamma_int_hz: f64,
    pub gamma_gas_hz: f64,
    pub g0_hz: f64,
    pub temperature_k: f64,
    #[serde(default = "one")]
    pub alpha_opt: f64,
    #[serde(default = "one")]
    pub beta_mech: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_zpf_m: Option<f64>,
    #[serde(default)]
    pub occupancy_convention: OccupancyConvention,
}

impl DeviceHz {
    /// The silicon optomechanical crystal used as the bundled demo device:
    /// κ/2π = 255 MHz, κ_ex/2π = 71 MHz, Ω_m/2π = 5.17 GHz, Γ_int/2π = 65 kHz,
    /// Γ_m/2π = 115 kHz with buffer gas, g₀/2π = 1.08 MHz, T = 2.0 K.
    pub fn demo_device() -> Self {
        Self {
            kappa_hz: 255e6,
            kappa_ex_hz: 71e6,
            omega_m_hz: 5.17e9,
            gamma_int_hz: 65e3,
            gamma_gas_hz: 50e3,
            g0_hz: 1.08e6,
            temperature_k: 2.0,
            alpha_opt: 1.0,
            beta_mech: 1.0,
            x_zpf_m: None,
            occupancy_convention: OccupancyConvention::RayleighJeans,
        }
    }
}

fn check(name: &'static str, value: f64, ok: bool, reason: &str) -> Result<(), ModelError> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("{reason} (got {value})"),
        })
    }
}

impl SystemParams {
    pub fn from_hz(dev: &DeviceHz) -> Result<Self, ModelError> {
        check("kappa_ex_hz", dev.kappa_ex_hz, dev.kappa_ex_hz >= 0.0, "must be >= 0")?;
        check(
            "kappa_hz",
            dev.kappa_hz,
            dev.kappa_hz > 0.0 && dev.kappa_hz >= dev.kappa_ex_hz,
            "must be > 0 and >= kappa_ex_hz",
        )?;
        let kappa = hz_to_angular(dev.kappa_hz);
        let kappa_ex = hz_to_angular(dev.kappa_ex_hz);
        let gamma_int = hz_to_angular(dev.gamma_int_hz);
        let gamma_gas = hz_to_angular(dev.gamma_gas_hz);
        let omega_m = hz_to_angular(dev.omega_m_hz);
        let mut p = Self {
            kappa,
            kappa_ex,
            kappa_0: kappa - kappa_ex,
            omega_m,
            gamma_int,
            gamma_gas,
            gamma_m: gamma_int + gamma_gas,
            g0: hz_to_angular(dev.g0_hz),
            temperature: dev.temperature_k,
            n_th: 0.0,
            x_zpf: dev.x_zpf_m.unwrap_or(1.0),
            alpha_opt: dev.alpha_opt,
            beta_mech: dev.beta_mech,
            convention: dev.occupancy_convention,
        };
        p.n_th = p.convention.occupancy(p.temperature, p.omega_m);
        p.validate()?;
        Ok(p)
    }

    /// Parameters of the bundled demo device.
    pub fn demo() -> Self {
        Self::from_hz(&DeviceHz::demo_device()).expect("demo device is valid")
    }

    pub fn to_hz(&self) -> DeviceHz {
        DeviceHz {
            kappa_hz: angular_to_hz(self.kappa),
            kappa_ex_hz: angular_to_hz(self.kappa_ex),
            omega_m_hz: angular_to_hz(self.omega_m),
            gamma_int_hz: angular_to_hz(self.gamma_int),
            gamma_gas_hz: angular_to_hz(self.gamma_gas),
            g0_hz: angular_to_hz(self.g0),
            temperature_k: self.temperature,
            alpha_opt: self.alpha_opt,
            beta_mech: self.beta_mech,
            x_zpf_m: Some(self.x_zpf),
            occupancy_convention: self.convention,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check("omega_m", self.omega_m, self.omega_m > 0.0, "must be > 0")?;
        check("kappa", self.kappa, self.kappa >= 0.0, "must be >= 0")?;
        check("kappa_ex", self.kappa_ex, self.kappa_ex >= 0.0, "must be >= 0")?;
        check("kappa_0", self.kappa_0, self.kappa_0 >= 0.0, "must be >= 0")?;
        let tol = 1e-12 * self.kappa.abs().max(1.0);
        check(
            "kappa",
            self.kappa,
            (self.kappa - self.kappa_ex - self.kappa_0).abs() <= tol,
            "must equal kappa_ex + kappa_0",
        )?;
        check("gamma_int", self.gamma_int, self.gamma_int >= 0.0, "must be >= 0")?;
        check("gamma_gas", self.gamma_gas, self.gamma_gas >= 0.0, "must be >= 0")?;
        let tol = 1e-12 * self.gamma_m.abs().max(1.0);
        check(
            "gamma_m",
            self.gamma_m,
            self.gamma_m >= 0.0 && (self.gamma_m - self.gamma_int - self.gamma_gas).abs() <= tol,
            "must equal gamma_int + gamma_gas",
        )?;
        check("g0", self.g0, self.g0 >= 0.0, "must be >= 0")?;
        check("temperature", self.temperature, self.temperature >= 0.0, "must be >= 0")?;
        check("n_th", self.n_th, self.n_th >= 0.0, "must be >= 0")?;
        let expected = self.convention.occupancy(self.temperature, self.omega_m);
        check(
            "n_th",
            self.n_th,
            (self.n_th - expected).abs() <= 1e-9 * expected.max(1.0),
            "inconsistent with temperature under the occupancy convention",
        )?;
        check("x_zpf", self.x_zpf, self.x_zpf > 0.0, "must be > 0")?;
        check("alpha_opt", self.alpha_opt, self.alpha_opt >= 0.0, "must be >= 0")?;
        check("beta_mech", self.beta_mech, self.beta_mech >= 0.0, "must be >= 0")?;
        Ok(())
    }

    /// Same device with the total mechanical damping replaced; the change is
    /// booked on the gas-damping term.
    pub fn with_gamma_m(mut self, gamma_m: f64) -> Self {
        self.gamma_gas = gamma_m - self.gamma_int;
        self.gamma_m = gamma_m;
        self
    }

    /// Same device at a different bath temperature.
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self.n_th = self.convention.occupancy(temperature, self.omega_m);
        self
    }

    /// Vacuum cooperativity `C₀ = 4 g₀² / (κ Γ_m)`.
    pub fn vacuum_cooperativity(&self) -> f64 {
        4.0 * self.g0 * self.g0 / (self.kappa * self.gamma_m)
    }

    /// Steady-state intracavity photon number for one tone of input power
    /// `power_w` reaching the cavity with coupling `efficiency`, detuned by
    /// `detuning` (rad/s) from resonance.
    pub fn intracavity_photons(&self, power_w: f64, efficiency: f64, detuning: f64, wavelength_m: f64) -> f64 {
        let photon_flux =
            efficiency * power_w / (crate::units::HBAR * crate::units::optical_angular_frequency(wavelength_m));
        photon_flux * self.kappa_ex / (0.25 * self.kappa * self.kappa + detuning * detuning)
    }
}

/// Two-tone drive: cooling tone and blue probe placed at ±(Ω_m + δ) around
/// their mean, which sits Δ from the cavity; the LO is Δ_LO above the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub n_c: f64,
    pub n_b: f64,
    pub delta_mean: f64,
    pub delta: f64,
    pub delta_lo: f64,
}

impl DriveConfig {
    /// Build from the cooling-tone detuning `Δ_c = Δ − Ω_m − δ`.
    pub fn from_cooling_detuning(
        params: &SystemParams,
        delta_c: f64,
        delta: f64,
        delta_lo: f64,
        n_c: f64,
        n_b: f64,
    ) -> Self {
        Self {
            n_c,
            n_b,
            delta_mean: delta_c + params.omega_m + delta,
            delta,
            delta_lo,
        }
    }

    /// Cooling-tone detuning from the cavity, `Δ_c = Δ − Ω_m − δ`.
    pub fn cooling_detuning(&self, params: &SystemParams) -> f64 {
        self.delta_mean - params.omega_m - self.delta
    }

    /// Blue-probe detuning from the cavity, `Δ + Ω_m + δ`.
    pub fn probe_detuning(&self, params: &SystemParams) -> f64 {
        self.delta_mean + params.omega_m + self.delta
    }

    /// Copy with the blue probe switched off.
    pub fn single_tone(mut self) -> Self {
        self.n_b = 0.0;
        self
    }

    /// Copy with the tone pair moved by `shift` (rad/s) relative to the cavity.
    pub fn shifted(mut self, shift: f64) -> Self {
        self.delta_mean += shift;
        self
    }

    pub fn g_c(&self, params: &SystemParams) -> f64 {
        params.g0 * self.n_c.sqrt()
    }

    pub fn g_b(&self, params: &SystemParams) -> f64 {
        params.g0 * self.n_b.sqrt()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check("n_c", self.n_c, self.n_c >= 0.0, "must be >= 0")?;
        check("n_b", self.n_b, self.n_b >= 0.0, "must be >= 0")?;
        check("delta_mean", self.delta_mean, true, "must be finite")?;
        check("delta", self.delta, true, "must be finite")?;
        check("delta_lo", self.delta_lo, true, "must be finite")?;
        Ok(())
    }

    /// Checks `0 < −δ < Δ_LO`, required whenever a heterodyne spectrum is formed.
    pub fn validate_heterodyne(&self) -> Result<(), ModelError> {
        self.validate()?;
        if 0.0 < -self.delta && -self.delta < self.delta_lo {
            Ok(())
        } else {
            Err(ModelError::HeterodyneOrdering {
                delta: self.delta,
                delta_lo: self.delta_lo,
            })
        }
    }
}

/// Optical absorption heating, linear and quadratic in the cooling-tone
/// photon number: the bath occupancy becomes `n_th + α₁ n_c + α₂ n_c²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeatingModel {
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(default)]
    pub alpha1_sigma: f64,
    #[serde(default)]
    pub alpha2_sigma: f64,
}

impl HeatingModel {
    pub fn new(alpha1: f64, alpha2: f64) -> Self {
        Self {
            alpha1,
            alpha2,
            alpha1_sigma: 0.0,
            alpha2_sigma: 0.0,
        }
    }

    /// Extra bath quanta at cooling-tone photon number `n_c`.
    pub fn excess_occupancy(&self, n_c: f64) -> f64 {
        self.alpha1 * n_c + self.alpha2 * n_c * n_c
    }
}
