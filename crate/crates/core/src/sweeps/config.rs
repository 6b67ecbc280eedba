//! Sweep description file (JSON, ordinary-frequency units).

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::fitting::Weighting;
use crate::model::{DeviceHz, DriveConfig, SystemParams};
use crate::thermometry::DEFAULT_DETUNING_SIGMA_HZ;
use crate::units::hz_to_angular;

use super::SweepError;

/// Photon number of one tone, given directly or from input power and a
/// measured coupling efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ToneSpec {
    Photons { n: f64 },
    Power { input_power_w: f64, efficiency: f64 },
}

impl ToneSpec {
    fn photons(&self, params: &SystemParams, detuning: f64, wavelength_m: Option<f64>) -> Result<f64, SweepError> {
        let n = match *self {
            Self::Photons { n } => n,
            Self::Power {
                input_power_w,
                efficiency,
            } => {
                let wl = wavelength_m
                    .ok_or_else(|| SweepError::Config("power-specified tones need `wavelength_m`".into()))?;
                if !(input_power_w >= 0.0 && efficiency > 0.0 && efficiency <= 1.0) {
                    return Err(SweepError::Config(format!(
                        "tone power {input_power_w} W / efficiency {efficiency} out of range"
                    )));
                }
                params.intracavity_photons(input_power_w, efficiency, detuning, wl)
            }
        };
        if n.is_finite() && n >= 0.0 {
            Ok(n)
        } else {
            Err(SweepError::Config(format!(
                "photon number must be finite and >= 0, got {n}"
            )))
        }
    }
}

/// One acquisition. Runs with a `probe` are two-tone (sideband asymmetry);
/// runs without are single-tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub id: String,
    /// Spectrum CSV, relative to the config file's directory.
    pub spectrum: PathBuf,
    /// Optional coherent-response trace used to measure `Δ_c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_response: Option<PathBuf>,
    /// Nominal cooling-tone detuning.
    pub delta_c_hz: f64,
    pub cooling: ToneSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ToneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflected_power_w: Option<f64>,
    /// Fiber-coupling session; calibrations never cross sessions.
    pub session: String,
}

/// Thermalized reference run for noise thermometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub run: String,
    pub temperature_k: f64,
    /// Intrinsic damping at the anchor. When absent it is inferred from the
    /// anchor fit as `Γ_eff − Γ_c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_m_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_m_sigma_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrFitChoice {
    /// η and α₂ free, as in the detection-efficiency fit of the data.
    #[default]
    Joint,
    /// η free, heating fixed to the heating regression result.
    FixedHeating,
    Skip,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub system: DeviceHz,
    /// Tone half-separation offset δ.
    pub delta_hz: f64,
    pub delta_lo_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
    /// Detuning uncertainty used when no coherent-response trace is given.
    #[serde(default = "default_detuning_sigma")]
    pub detuning_sigma_hz: f64,
    /// Fit weighting; statistical when unset and the spectrum records its
    /// average count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<Weighting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorConfig>,
    #[serde(default = "default_true")]
    pub fit_heating: bool,
    #[serde(default)]
    pub snr_fit: SnrFitChoice,
    pub runs: Vec<RunSpec>,
}

fn default_detuning_sigma() -> f64 {
    DEFAULT_DETUNING_SIGMA_HZ
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, SweepError> {
        let config: Self = serde_json::from_str(text).map_err(|e| SweepError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep config serializes")
    }

    pub fn params(&self) -> Result<SystemParams, SweepError> {
        Ok(SystemParams::from_hz(&self.system)?)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        self.params()?;
        let mut ids = BTreeSet::new();
        for r in &self.runs {
            if r.id.is_empty() {
                return Err(SweepError::Config("run id must not be empty".into()));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(SweepError::Config(format!("duplicate run id {:?}", r.id)));
            }
            if !r.delta_c_hz.is_finite() {
                return Err(SweepError::Config(format!("run {:?}: delta_c_hz must be finite", r.id)));
            }
        }
        if let Some(a) = &self.anchor {
            if !ids.contains(a.run.as_str()) {
                return Err(SweepError::Config(format!(
                    "anchor run {:?} is not in the run list",
                    a.run
                )));
            }
            if !(a.temperature_k > 0.0) {
                return Err(SweepError::Config("anchor temperature must be positive".into()));
            }
        }
        if !(self.detuning_sigma_hz >= 0.0) {
            return Err(SweepError::Config("detuning_sigma_hz must be >= 0".into()));
        }
        Ok(())
    }

    /// Drive of a run at cooling-tone detuning `delta_c` (rad/s). Tones given
    /// by power are converted at their own detunings; the probe sits
    /// `2(Ω_m + δ)` above the cooling tone.
    pub fn drive(&self, params: &SystemParams, run: &RunSpec, delta_c: f64) -> Result<DriveConfig, SweepError> {
        let delta = hz_to_angular(self.delta_hz);
        let n_c = run.cooling.photons(params, delta_c, self.wavelength_m)?;
        let probe_detuning = delta_c + 2.0 * (params.omega_m + delta);
        let n_b = match &run.probe {
            Some(p) => p.photons(params, probe_detuning, self.wavelength_m)?,
            None => 0.0,
        };
        let drive =
            DriveConfig::from_cooling_detuning(params, delta_c, delta, hz_to_angular(self.delta_lo_hz), n_c, n_b);
        drive.validate_heterodyne()?;
        Ok(drive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        let system = serde_json::to_string(&DeviceHz::demo_device()).unwrap();
        format!(
            r#"{{"system": {system}, "delta_hz": -1e8, "delta_lo_hz": 3e8, "wavelength_m": 1.54e-6,
                "runs": [{{"id": "a", "spectrum": "a.csv", "delta_c_hz": -5.17e9, "cooling": {{"n": 100}},
                           "session": "s"}},
                         {{"id": "b", "spectrum": "b.csv", "delta_c_hz": -5.17e9,
                           "cooling": {{"input_power_w": 5e-4, "efficiency": 0.4}},
                           "probe": {{"n": 10}}, "session": "s"}}]}}"#
        )
    }

    #[test]
    fn parses_and_builds_drives() {
        let c = SweepConfig::from_json(&minimal()).unwrap();
        assert!(c.fit_heating);
        assert_eq!(c.snr_fit, SnrFitChoice::Joint);
        let p = c.params().unwrap();
        let d = c.drive(&p, &c.runs[1], -p.omega_m).unwrap();
        assert!((d.cooling_detuning(&p) + p.omega_m).abs() < 1e-3);
        assert!(d.n_c > 500.0 && d.n_b == 10.0);
        let back = SweepConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_keys_and_duplicates() {
        let bad = minimal().replace("\"delta_hz\"", "\"extra\": 1, \"delta_hz\"");
        assert!(matches!(SweepConfig::from_json(&bad), Err(SweepError::Config(_))));
        let dup = minimal().replace("\"id\": \"b\"", "\"id\": \"a\"");
        assert!(matches!(SweepConfig::from_json(&dup), Err(SweepError::Config(_))));
        let bad_anchor = minimal().replace(
            "\"runs\"",
            "\"anchor\": {\"run\": \"zz\", \"temperature_k\": 2.0}, \"runs\"",
        );
        assert!(SweepConfig::from_json(&bad_anchor).is_err());
    }
}
