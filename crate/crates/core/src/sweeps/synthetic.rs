//! Seeded synthetic sweeps: analytic heterodyne spectra at the heated
//! occupancy of each run, with averaged-periodogram noise, packaged with a
//! matching sweep configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::atomic_write;
use crate::model::{self, DeviceHz, DriveConfig, HeatingModel, SystemParams};
use crate::spectra::{self, FrequencyGrid, Spectrum};
use crate::units::{angular_to_hz, hz_to_angular};

use super::config::{AnchorConfig, RunSpec, SnrFitChoice, SweepConfig, ToneSpec};
use super::pipeline::MemorySource;
use super::SweepError;

/// Upper bound on bins per synthesized spectrum.
pub const MAX_BINS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRunSpec {
    pub id: String,
    pub session: String,
    pub delta_c_hz: f64,
    pub cooling: ToneSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ToneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSweepSpec {
    pub system: DeviceHz,
    pub delta_hz: f64,
    pub delta_lo_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
    pub eta: f64,
    pub heating: HeatingModel,
    pub averages: u64,
    pub seed: u64,
    /// Grid bins per effective linewidth.
    pub bins_per_linewidth: f64,
    /// Grid extent beyond each sideband center, in effective linewidths.
    pub linewidths_each_side: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorConfig>,
    pub runs: Vec<SyntheticRunSpec>,
}

/// Ground truth of one synthesized run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTruth {
    pub n_f: f64,
    pub n_c: f64,
    pub n_b: f64,
    pub delta_c_hz: f64,
    pub gamma_eff_hz: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSweep {
    pub config: SweepConfig,
    pub spectra: BTreeMap<String, Spectrum>,
    pub truth: BTreeMap<String, RunTruth>,
}

/// Per-run seed derived from the sweep seed and the run's position.
pub fn run_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn spectrum_path(id: &str) -> PathBuf {
    PathBuf::from("spectra").join(format!("{id}.csv"))
}

impl SyntheticSweepSpec {
    /// Sweep configuration that analyzes the generated spectra.
    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            system: self.system,
            delta_hz: self.delta_hz,
            delta_lo_hz: self.delta_lo_hz,
            wavelength_m: self.wavelength_m,
            detuning_sigma_hz: crate::thermometry::DEFAULT_DETUNING_SIGMA_HZ,
            weighting: None,
            anchor: self.anchor.clone(),
            fit_heating: true,
            snr_fit: SnrFitChoice::Joint,
            runs: self
                .runs
                .iter()
                .map(|r| RunSpec {
                    id: r.id.clone(),
                    spectrum: spectrum_path(&r.id),
                    coherent_response: None,
                    delta_c_hz: r.delta_c_hz,
                    cooling: r.cooling,
                    probe: r.probe,
                    input_power_w: None,
                    reflected_power_w: None,
                    session: r.session.clone(),
                })
                .collect(),
        }
    }

    fn grid(&self, params: &SystemParams, drive: &DriveConfig) -> Result<FrequencyGrid, SweepError> {
        Ok(spectra::sideband_grid(
            params,
            drive,
            self.bins_per_linewidth,
            self.linewidths_each_side,
            MAX_BINS,
        )?)
    }

    pub fn generate(&self) -> Result<SyntheticSweep, SweepError> {
        if !(self.bins_per_linewidth > 0.0 && self.linewidths_each_side >= crate::spectra::SIDEBAND_COVERAGE) {
            return Err(SweepError::InvalidInput(format!(
                "grid needs bins_per_linewidth > 0 and linewidths_each_side >= {}",
                crate::spectra::SIDEBAND_COVERAGE
            )));
        }
        let config = self.sweep_config();
        config.validate()?;
        let params = config.params()?;
        let mut spectra = BTreeMap::new();
        let mut truth = BTreeMap::new();
        for (i, run) in config.runs.iter().enumerate() {
            let drive = config.drive(&params, run, hz_to_angular(run.delta_c_hz))?;
            let n_f = model::occupancy_with_heating(&params, &drive, &self.heating)?;
            let clean = spectra::heterodyne_psd(&params, &drive, n_f, self.eta, &self.grid(&params, &drive)?)?;
            let seed = run_seed(self.seed, i);
            spectra.insert(run.id.clone(), spectra::synthesize(&clean, self.averages, seed)?);
            truth.insert(
                run.id.clone(),
                RunTruth {
                    n_f,
                    n_c: drive.n_c,
                    n_b: drive.n_b,
                    delta_c_hz: run.delta_c_hz,
                    gamma_eff_hz: angular_to_hz(model::effective_damping(&params, &drive)),
                    seed,
                },
            );
        }
        Ok(SyntheticSweep { config, spectra, truth })
    }

    /// Power sweep on the red sideband: five two-tone calibration runs and
    /// `points` single-tone runs with `n̄_c` log-spaced over `[5, 800]`,
    /// noise-anchored at the lowest power.
    pub fn power_sweep(points: usize, averages: u64, seed: u64) -> Self {
        let system = DeviceHz::demo_device();
        let delta_c_hz = -system.omega_m_hz;
        let mut runs: Vec<SyntheticRunSpec> = [150.0, 250.0, 400.0, 550.0, 700.0]
            .iter()
            .enumerate()
            .map(|(i, &n)| SyntheticRunSpec {
                id: format!("cal-{i:02}"),
                session: "power".into(),
                delta_c_hz,
                cooling: ToneSpec::Photons { n },
                probe: Some(ToneSpec::Photons { n: n / 6.0 }),
            })
            .collect();
        runs.extend(
            super::theory::logspace(5.0, 800.0, points)
                .into_iter()
                .enumerate()
                .map(|(i, n)| SyntheticRunSpec {
                    id: format!("st-{i:02}"),
                    session: "power".into(),
                    delta_c_hz,
                    cooling: ToneSpec::Photons { n },
                    probe: None,
                }),
        );
        Self {
            system,
            delta_hz: -100e6,
            delta_lo_hz: 300e6,
            wavelength_m: None,
            eta: 0.064,
            heating: HeatingModel::new(0.0, 1.2e-6),
            averages,
            seed,
            bins_per_linewidth: 10.0,
            linewidths_each_side: 10.0,
            anchor: Some(AnchorConfig {
                run: "st-00".into(),
                temperature_k: 2.0,
                gamma_m_hz: None,
                gamma_m_sigma_hz: None,
            }),
            runs,
        }
    }

    /// Detuning sweep at fixed input power (500 µW single tone, 350/60 µW
    /// for the two-tone calibration runs, 40 % coupling), `points`
    /// single-tone detunings from −7.18 GHz to −3.2 GHz, noise-anchored at
    /// the farthest detuning with the device's Γ_m.
    pub fn detuning_sweep(points: usize, averages: u64, seed: u64) -> Self {
        let system = DeviceHz::demo_device();
        let efficiency = 0.4;
        let mut runs: Vec<SyntheticRunSpec> = [-6.5e9, -6.0e9, -5.5e9, -5.17e9, -4.8e9]
            .iter()
            .enumerate()
            .map(|(i, &d)| SyntheticRunSpec {
                id: format!("cal-{i:02}"),
                session: "detuning".into(),
                delta_c_hz: d,
                cooling: ToneSpec::Power {
                    input_power_w: 350e-6,
                    efficiency,
                },
                probe: Some(ToneSpec::Power {
                    input_power_w: 60e-6,
                    efficiency,
                }),
            })
            .collect();
        let mut detunings = super::theory::linspace(-7.18e9, -3.2e9, points);
        if !detunings.iter().any(|d| (d + 5.17e9).abs() < 1.0) {
            detunings.push(-5.17e9);
            detunings.sort_by(f64::total_cmp);
        }
        runs.extend(detunings.into_iter().enumerate().map(|(i, d)| SyntheticRunSpec {
            id: format!("st-{i:02}"),
            session: "detuning".into(),
            delta_c_hz: d,
            cooling: ToneSpec::Power {
                input_power_w: 500e-6,
                efficiency,
            },
            probe: None,
        }));
        Self {
            system,
            delta_hz: -100e6,
            delta_lo_hz: 300e6,
            wavelength_m: Some(1.54e-6),
            eta: 0.064,
            heating: HeatingModel::new(0.0, 1.2e-6),
            averages,
            seed,
            bins_per_linewidth: 10.0,
            linewidths_each_side: 10.0,
            anchor: Some(AnchorConfig {
                run: "st-00".into(),
                temperature_k: 2.0,
                gamma_m_hz: Some(system.gamma_int_hz + system.gamma_gas_hz),
                gamma_m_sigma_hz: None,
            }),
            runs,
        }
    }
}

impl SyntheticSweep {
    pub fn source(&self) -> MemorySource {
        MemorySource {
            spectra: self.spectra.clone(),
            traces: BTreeMap::new(),
        }
    }

    /// Write `sweep.json`, `truth.json` and `spectra/<id>.csv` (with
    /// sidecars) under `dir`. Returns the config path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, SweepError> {
        let io_err = |p: &Path, e: std::io::Error| SweepError::Io {
            path: p.display().to_string(),
            reason: e.to_string(),
        };
        let spectra_dir = dir.join("spectra");
        std::fs::create_dir_all(&spectra_dir).map_err(|e| io_err(&spectra_dir, e))?;
        for run in &self.config.runs {
            spectra::write_spectrum(&dir.join(&run.spectrum), &self.spectra[&run.id])?;
        }
        let truth_path = dir.join("truth.json");
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serializes") + "\n";
        atomic_write(&truth_path, truth.as_bytes()).map_err(|e| io_err(&truth_path, e))?;
        let config_path = dir.join("sweep.json");
        atomic_write(&config_path, (self.config.to_json() + "\n").as_bytes()).map_err(|e| io_err(&config_path, e))?;
        Ok(config_path)
    }
}
