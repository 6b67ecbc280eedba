//! Run configuration files for single-drive work: model evaluation, theory
//! tables, spectrum synthesis and thermometry.
//!
//! Every dimensional key carries its unit as a suffix (`_hz`, `_k`, `_w`,
//! `_m`); unknown keys are rejected. Conversion to angular units happens in
//! [`RunConfigFile::params`] and [`RunConfigFile::drive`] only.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::fitting::LmOptions;
use crate::model::{DeviceHz, DriveConfig, HeatingModel, ModelError, SystemParams};
use crate::sweeps::{linspace, logspace, PhotonSource, SweepError, TheoryGrid};
use crate::thermometry::{ThermoOptions, DEFAULT_DETUNING_SIGMA_HZ};
use crate::units::hz_to_angular;

fn default_true() -> bool {
    true
}

fn default_bins() -> f64 {
    10.0
}

fn default_linewidths() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveBlock {
    /// Cooling-tone detuning from the cavity.
    pub delta_c_hz: f64,
    #[serde(default)]
    pub delta_hz: f64,
    #[serde(default)]
    pub delta_lo_hz: f64,
    pub n_c: f64,
    #[serde(default)]
    pub n_b: f64,
}

/// Cooling-tone photon number along a detuning sweep: fixed, or set by a
/// fixed input power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningSweepBlock {
    pub delta_c_min_hz: f64,
    pub delta_c_max_hz: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweepBlock {
    pub n_c_min: f64,
    pub n_c_max: f64,
    pub points: usize,
    /// Log spacing in `n_c` (linear otherwise).
    #[serde(default = "default_true")]
    pub log: bool,
    /// Defaults to the drive block's detuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_c_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlocks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerSweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<DetuningSweepBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisBlock {
    pub eta: f64,
    pub averages: u64,
    /// Occupancy of the synthesized spectrum; the (heated) model value
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_f: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins_per_linewidth: f64,
    #[serde(default = "default_linewidths")]
    pub linewidths_each_side: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsBlock {
    #[serde(default)]
    pub synthesis: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_sigma_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub system: DeviceHz,
    pub drive: DriveBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heating: Option<HeatingModel>,
    #[serde(default)]
    pub sweeps: SweepBlocks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisBlock>,
    #[serde(default)]
    pub paths: PathsBlock,
    #[serde(default)]
    pub seeds: SeedsBlock,
    #[serde(default)]
    pub tolerances: ToleranceBlock,
}

fn invalid(msg: impl Into<String>) -> SweepError {
    SweepError::Config(msg.into())
}

impl RunConfigFile {
    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self, SweepError> {
        let config: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let params = self.params()?;
        self.drive(&params).validate()?;
        if let Some(p) = &self.sweeps.power {
            if !(p.points >= 1 && p.n_c_min >= 0.0 && p.n_c_max >= p.n_c_min) || (p.log && !(p.n_c_min > 0.0)) {
                return Err(invalid(
                    "power sweep needs points >= 1, 0 <= n_c_min <= n_c_max (> 0 when log)",
                ));
            }
        }
        if let Some(d) = &self.sweeps.detuning {
            if !(d.points >= 1 && d.delta_c_max_hz >= d.delta_c_min_hz) {
                return Err(invalid(
                    "detuning sweep needs points >= 1 and delta_c_min_hz <= delta_c_max_hz",
                ));
            }
            d.photons()?;
        }
        if let Some(s) = &self.synthesis {
            if !(s.eta > 0.0 && s.eta <= 1.0) || s.averages == 0 {
                return Err(invalid("synthesis needs 0 < eta <= 1 and averages >= 1"));
            }
            if s.n_f.is_some_and(|n| !(n >= 0.0)) {
                return Err(invalid("synthesis n_f must be >= 0"));
            }
        }
        if self.tolerances.detuning_sigma_hz.is_some_and(|s| !(s >= 0.0)) {
            return Err(invalid("detuning_sigma_hz must be >= 0"));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams, ModelError> {
        SystemParams::from_hz(&self.system)
    }

    pub fn drive(&self, params: &SystemParams) -> DriveConfig {
        let d = &self.drive;
        DriveConfig::from_cooling_detuning(
            params,
            hz_to_angular(d.delta_c_hz),
            hz_to_angular(d.delta_hz),
            hz_to_angular(d.delta_lo_hz),
            d.n_c,
            d.n_b,
        )
    }

    pub fn power_grid(&self) -> Result<TheoryGrid, SweepError> {
        let p = self
            .sweeps
            .power
            .ok_or_else(|| invalid("config has no power sweep block"))?;
        let n_c = if p.log {
            logspace(p.n_c_min, p.n_c_max, p.points)
        } else {
            linspace(p.n_c_min, p.n_c_max, p.points)
        };
        Ok(TheoryGrid::Power {
            n_c,
            delta_c: hz_to_angular(p.delta_c_hz.unwrap_or(self.drive.delta_c_hz)),
        })
    }

    pub fn detuning_grid(&self) -> Result<TheoryGrid, SweepError> {
        let d = self
            .sweeps
            .detuning
            .ok_or_else(|| invalid("config has no detuning sweep block"))?;
        Ok(TheoryGrid::Detuning {
            delta_c: linspace(d.delta_c_min_hz, d.delta_c_max_hz, d.points)
                .into_iter()
                .map(hz_to_angular)
                .collect(),
            photons: d.photons()?,
        })
    }

    pub fn thermo_options(&self) -> ThermoOptions {
        ThermoOptions {
            detuning_sigma: hz_to_angular(self.tolerances.detuning_sigma_hz.unwrap_or(DEFAULT_DETUNING_SIGMA_HZ)),
        }
    }

    pub fn lm_options(&self) -> LmOptions {
        let t = &self.tolerances;
        let d = LmOptions::default();
        LmOptions {
            max_iterations: t.max_iterations.unwrap_or(d.max_iterations),
            gradient_tol: t.gradient_tol.unwrap_or(d.gradient_tol),
            step_tol: t.step_tol.unwrap_or(d.step_tol),
        }
    }
}

impl DetuningSweepBlock {
    pub fn photons(&self) -> Result<PhotonSource, SweepError> {
        match (self.n_c, self.input_power_w, self.efficiency, self.wavelength_m) {
            (Some(n_c), None, None, None) if n_c >= 0.0 => Ok(PhotonSource::Fixed { n_c }),
            (None, Some(input_power_w), Some(efficiency), Some(wavelength_m))
                if input_power_w >= 0.0 && efficiency > 0.0 && efficiency <= 1.0 && wavelength_m > 0.0 =>
            {
                Ok(PhotonSource::FromPower {
                    input_power_w,
                    efficiency,
                    wavelength_m,
                })
            }
            _ => Err(invalid(
                "detuning sweep needs either n_c, or input_power_w with efficiency in (0, 1] and wavelength_m",
            )),
        }
    }
}
