//! Sweep pipeline: per-run coherent-response fit, spectrum fit and
//! thermometry (in parallel), then calibration pooling, noise anchoring and
//! the global regressions. Results merge in run-id order, so outputs are
//! deterministic for given inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fitting::{
    fit_coherent_response, fit_lorentzians, CoherentInit, CoherentResponseFit, CoherentTrace, FitMode, FitOptions,
    FitRecord, LmOptions, LorentzianFitResult, LorentzianParam, Weighting,
};
use crate::io::atomic_write;
use crate::model::{self, DriveConfig, SystemParams};
use crate::spectra::{self, DriveSnapshot, Spectrum};
use crate::thermometry::{self, Calibration, NoiseAnchor, OccupancyEstimate, ThermoError, ThermoOptions};
use crate::units::{angular_to_hz, hz_to_angular};

use super::config::{RunSpec, SnrFitChoice, SweepConfig};
use super::heating::{fit_heating, HeatingFit, HeatingPoint, HEATING_MIN_RUNS};
use super::snr::{fit_snr, SnrFit, SnrFitMode, SnrPoint};
use super::theory::{theory_at_points, SweepVariable, TheoryTable};
use super::SweepError;

/// Relative tolerance when comparing spectrum metadata with the config.
const META_TOLERANCE: f64 = 1e-9;
/// Detuning spread (Hz) below which single-tone runs form a power sweep.
const POWER_SWEEP_DETUNING_SPREAD_HZ: f64 = 1e6;
/// Minimum single-tone runs for the joint SNR fit.
const SNR_MIN_RUNS: usize = 3;

/// Where run inputs come from.
pub trait SpectrumSource: Sync {
    fn spectrum(&self, run: &RunSpec) -> Result<Spectrum, SweepError>;
    /// `None` when the run has no coherent-response trace.
    fn trace(&self, run: &RunSpec) -> Result<Option<CoherentTrace>, SweepError>;
}

/// Files relative to a base directory (normally the config's directory).
#[derive(Debug, Clone)]
pub struct DirSource {
    pub base: PathBuf,
}

impl DirSource {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self { base: base.into() }
    }
}

impl SpectrumSource for DirSource {
    fn spectrum(&self, run: &RunSpec) -> Result<Spectrum, SweepError> {
        Ok(spectra::read_spectrum(&self.base.join(&run.spectrum))?)
    }

    fn trace(&self, run: &RunSpec) -> Result<Option<CoherentTrace>, SweepError> {
        let Some(rel) = &run.coherent_response else {
            return Ok(None);
        };
        let path = self.base.join(rel);
        let text = std::fs::read_to_string(&path).map_err(|e| SweepError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Some(CoherentTrace::from_csv(&text)?))
    }
}

/// In-memory inputs keyed by run id.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub spectra: BTreeMap<String, Spectrum>,
    pub traces: BTreeMap<String, CoherentTrace>,
}

impl SpectrumSource for MemorySource {
    fn spectrum(&self, run: &RunSpec) -> Result<Spectrum, SweepError> {
        self.spectra
            .get(&run.id)
            .cloned()
            .ok_or_else(|| SweepError::InvalidInput(format!("no spectrum for run {:?}", run.id)))
    }

    fn trace(&self, run: &RunSpec) -> Result<Option<CoherentTrace>, SweepError> {
        if run.coherent_response.is_none() {
            return Ok(None);
        }
        self.traces
            .get(&run.id)
            .cloned()
            .map(Some)
            .ok_or_else(|| SweepError::InvalidInput(format!("no coherent-response trace for run {:?}", run.id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    SingleTone,
    TwoTone,
}

/// A successfully processed run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub id: String,
    pub session: String,
    pub kind: RunKind,
    pub drive: DriveConfig,
    /// Detuning uncertainty used for the thermometry (rad/s).
    pub delta_c_sigma: f64,
    pub input_power_w: Option<f64>,
    pub reflected_power_w: Option<f64>,
    pub coherent: Option<CoherentResponseFit>,
    pub fit: LorentzianFitResult,
    /// Two-tone runs: occupancy and calibration from the asymmetry.
    pub asymmetry: Option<(OccupancyEstimate, Calibration)>,
    /// Single-tone runs: occupancy from the session's pooled calibration.
    pub calibrated: Option<OccupancyEstimate>,
    /// Single-tone runs: noise-anchored occupancy.
    pub anchored: Option<OccupancyEstimate>,
    /// Non-fatal problems met after the fit.
    pub notes: Vec<String>,
}

impl SweepRun {
    /// The run's primary occupancy: asymmetry for two-tone runs, the
    /// calibrated estimate (else the anchored one) for single-tone runs.
    pub fn occupancy(&self) -> Option<&OccupancyEstimate> {
        match self.kind {
            RunKind::TwoTone => self.asymmetry.as_ref().map(|a| &a.0),
            RunKind::SingleTone => self.calibrated.as_ref().or(self.anchored.as_ref()),
        }
    }

    /// Cooling-sideband peak height above the fitted background, with its
    /// uncertainty. Single-tone runs only.
    pub fn snr(&self) -> Option<(f64, f64)> {
        (self.kind == RunKind::SingleTone).then(|| (self.fit.peak_height1(), self.fit.peak_height1_sigma()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: String,
    pub session: String,
    pub error: String,
}

/// Outcome of a global regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Regression<T> {
    Fitted { result: T },
    Skipped { reason: String },
    Failed { error: String },
}

impl<T> Regression<T> {
    pub fn fitted(&self) -> Option<&T> {
        match self {
            Self::Fitted { result } => Some(result),
            _ => None,
        }
    }
}

/// Noise anchor as applied, ordinary-frequency units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSummary {
    pub run: String,
    pub temperature_k: f64,
    pub area_hz: f64,
    pub gamma_s0_hz: f64,
    pub gamma_m_hz: f64,
    pub gamma_m_sigma_hz: f64,
    /// Whether `Γ_m` was inferred from the anchor fit rather than given.
    pub gamma_m_inferred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs_total: usize,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub failures: Vec<RunFailure>,
    /// Pooled calibration per coupling session.
    pub calibrations: BTreeMap<String, Calibration>,
    pub anchor: Option<AnchorSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_error: Option<String>,
    pub heating: Regression<HeatingFit>,
    pub snr: Regression<SnrFit>,
    /// Theory evaluated at the single-tone run drives.
    pub theory: Option<TheoryTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Successful runs in run-id order.
    pub runs: Vec<SweepRun>,
    pub summary: SweepSummary,
}

/// One line of the run ledger, ordinary-frequency units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub run_id: String,
    pub session: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<RunKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_c_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_c_sigma_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflected_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent: Option<FitRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymmetry: Option<OccupancyEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<OccupancyEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchored: Option<OccupancyEstimate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LedgerEntry {
    fn from_run(params: &SystemParams, r: &SweepRun) -> Self {
        let snr = r.snr();
        Self {
            run_id: r.id.clone(),
            session: r.session.clone(),
            status: "ok".into(),
            kind: Some(r.kind),
            drive: Some(DriveSnapshot::from(&r.drive)),
            delta_c_hz: Some(angular_to_hz(r.drive.cooling_detuning(params))),
            delta_c_sigma_hz: Some(angular_to_hz(r.delta_c_sigma)),
            input_power_w: r.input_power_w,
            reflected_power_w: r.reflected_power_w,
            coherent: r.coherent.as_ref().map(|c| c.to_record()),
            fit: Some(r.fit.to_record()),
            snr: snr.map(|s| s.0),
            snr_sigma: snr.map(|s| s.1),
            asymmetry: r.asymmetry.as_ref().map(|a| a.0),
            calibration: r.asymmetry.as_ref().map(|a| a.1.clone()),
            calibrated: r.calibrated,
            anchored: r.anchored,
            notes: r.notes.clone(),
            error: None,
        }
    }

    fn from_failure(f: &RunFailure) -> Self {
        Self {
            run_id: f.run_id.clone(),
            session: f.session.clone(),
            status: "failed".into(),
            kind: None,
            drive: None,
            delta_c_hz: None,
            delta_c_sigma_hz: None,
            input_power_w: None,
            reflected_power_w: None,
            coherent: None,
            fit: None,
            snr: None,
            snr_sigma: None,
            asymmetry: None,
            calibration: None,
            calibrated: None,
            anchored: None,
            notes: Vec::new(),
            error: Some(f.error.clone()),
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= META_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn check_metadata(spectrum: &Spectrum, config: &SweepConfig) -> Result<(), SweepError> {
    let meta = &spectrum.meta;
    if !close(meta.delta_lo_hz, config.delta_lo_hz) {
        return Err(SweepError::InvalidInput(format!(
            "spectrum Δ_LO/2π = {} Hz differs from the sweep's {} Hz",
            meta.delta_lo_hz, config.delta_lo_hz
        )));
    }
    if let Some(d) = &meta.drive {
        if !close(d.delta_hz, config.delta_hz) {
            return Err(SweepError::InvalidInput(format!(
                "spectrum δ/2π = {} Hz differs from the sweep's {} Hz",
                d.delta_hz, config.delta_hz
            )));
        }
    }
    Ok(())
}

fn process_run(
    config: &SweepConfig,
    params: &SystemParams,
    run: &RunSpec,
    source: &dyn SpectrumSource,
) -> Result<SweepRun, SweepError> {
    let spectrum = source.spectrum(run)?;
    check_metadata(&spectrum, config)?;

    let (coherent, delta_c, delta_c_sigma) = match source.trace(run)? {
        Some(trace) => {
            let init = CoherentInit {
                kappa_hz: Some(config.system.kappa_hz),
                kappa_ex_hz: Some(config.system.kappa_ex_hz),
                delta_c_hz: Some(run.delta_c_hz),
                omit: None,
            };
            let fit = fit_coherent_response(&trace, &init, &LmOptions::default())?;
            let (d, s) = (fit.delta_c, fit.delta_c_sigma);
            (Some(fit), d, s)
        }
        None => (
            None,
            hz_to_angular(run.delta_c_hz),
            hz_to_angular(config.detuning_sigma_hz),
        ),
    };
    let drive = config.drive(params, run, delta_c)?;
    let kind = if drive.n_b > 0.0 {
        RunKind::TwoTone
    } else {
        RunKind::SingleTone
    };
    let mode = match kind {
        RunKind::TwoTone => FitMode::Double,
        RunKind::SingleTone => FitMode::Single,
    };
    let weighting = config.weighting.unwrap_or(if spectrum.meta.averages.is_some() {
        Weighting::Statistical
    } else {
        Weighting::Uniform
    });
    let options = FitOptions {
        weighting,
        ..FitOptions::default()
    };
    let fit = fit_lorentzians(&spectrum, mode, None, &options)?;

    let mut notes = Vec::new();
    let asymmetry = if kind == RunKind::TwoTone {
        let opts = ThermoOptions {
            detuning_sigma: delta_c_sigma,
        };
        match thermometry::occupancy_from_asymmetry(&fit, params, &drive, &opts) {
            Ok((est, cal)) => Some((est, cal.tagged(run.id.clone(), run.session.clone()))),
            Err(e @ ThermoError::NegativeOccupancy { .. }) => {
                notes.push(format!("asymmetry: {e}"));
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    Ok(SweepRun {
        id: run.id.clone(),
        session: run.session.clone(),
        kind,
        drive,
        delta_c_sigma,
        input_power_w: run.input_power_w,
        reflected_power_w: run.reflected_power_w,
        coherent,
        fit,
        asymmetry,
        calibrated: None,
        anchored: None,
        notes,
    })
}

fn pool_sessions(runs: &[SweepRun]) -> BTreeMap<String, Calibration> {
    let mut by_session: BTreeMap<String, Vec<Calibration>> = BTreeMap::new();
    for r in runs {
        if let Some((_, cal)) = &r.asymmetry {
            by_session.entry(r.session.clone()).or_default().push(cal.clone());
        }
    }
    by_session
        .into_iter()
        .filter_map(|(session, cals)| {
            let pooled = if cals.len() == 1 {
                Some(cals[0].clone())
            } else {
                thermometry::pool_calibration(&cals).ok()
            };
            pooled.map(|c| (session, c))
        })
        .collect()
}

fn build_anchor(
    config: &SweepConfig,
    params: &SystemParams,
    runs: &[SweepRun],
) -> Result<Option<(NoiseAnchor, AnchorSummary)>, String> {
    let Some(ac) = &config.anchor else {
        return Ok(None);
    };
    let run = runs
        .iter()
        .find(|r| r.id == ac.run)
        .ok_or_else(|| format!("anchor run {:?} failed or is missing", ac.run))?;
    if run.kind != RunKind::SingleTone {
        return Err(format!("anchor run {:?} must be single-tone", ac.run));
    }
    let temperature = ac.temperature_k;
    let (anchor, inferred) = match ac.gamma_m_hz {
        Some(gm) => {
            if !(gm > 0.0) {
                return Err(format!("anchor Γ_m/2π = {gm} Hz must be positive"));
            }
            let anchor = NoiseAnchor {
                area: run.fit.area1(),
                area_sigma: run.fit.sigma(LorentzianParam::Area1),
                gamma_s0: model::scattering_rates(params, &run.drive).gamma_c,
                temperature,
                gamma_m: hz_to_angular(gm),
                gamma_m_sigma: hz_to_angular(ac.gamma_m_sigma_hz.unwrap_or(0.0)),
            };
            (anchor, false)
        }
        None => (
            NoiseAnchor::from_fit(&run.fit, params, &run.drive, temperature).map_err(|e| e.to_string())?,
            true,
        ),
    };
    let summary = AnchorSummary {
        run: ac.run.clone(),
        temperature_k: temperature,
        area_hz: angular_to_hz(anchor.area),
        gamma_s0_hz: angular_to_hz(anchor.gamma_s0),
        gamma_m_hz: angular_to_hz(anchor.gamma_m),
        gamma_m_sigma_hz: angular_to_hz(anchor.gamma_m_sigma),
        gamma_m_inferred: inferred,
    };
    Ok(Some((anchor, summary)))
}

fn heating_regression(config: &SweepConfig, params: &SystemParams, runs: &[SweepRun]) -> Regression<HeatingFit> {
    if !config.fit_heating {
        return Regression::Skipped {
            reason: "disabled in the sweep configuration".into(),
        };
    }
    let points: Vec<HeatingPoint> = runs
        .iter()
        .filter(|r| r.kind == RunKind::SingleTone)
        .filter_map(|r| {
            r.occupancy().map(|e| HeatingPoint {
                drive: r.drive,
                n_f: e.n_f,
                sigma: e.sigma(),
            })
        })
        .collect();
    if points.len() < HEATING_MIN_RUNS {
        return Regression::Skipped {
            reason: format!("{} single-tone occupancies, need {HEATING_MIN_RUNS}", points.len()),
        };
    }
    match fit_heating(&points, params) {
        Ok(result) => Regression::Fitted { result },
        Err(e) => Regression::Failed { error: e.to_string() },
    }
}

fn snr_regression(
    config: &SweepConfig,
    params: &SystemParams,
    runs: &[SweepRun],
    heating: &Regression<HeatingFit>,
) -> Regression<SnrFit> {
    let mode = match config.snr_fit {
        SnrFitChoice::Skip => {
            return Regression::Skipped {
                reason: "disabled in the sweep configuration".into(),
            }
        }
        SnrFitChoice::Joint => SnrFitMode::JointQuadratic,
        SnrFitChoice::FixedHeating => match heating.fitted() {
            Some(h) => SnrFitMode::FixedHeating(h.model),
            None => {
                return Regression::Skipped {
                    reason: "fixed-heating SNR fit needs a heating model".into(),
                }
            }
        },
    };
    let points: Vec<SnrPoint> = runs
        .iter()
        .filter_map(|r| {
            r.snr().map(|(snr, sigma)| SnrPoint {
                n_c: r.drive.n_c,
                delta_c: r.drive.cooling_detuning(params),
                snr,
                sigma,
            })
        })
        .collect();
    if points.len() < SNR_MIN_RUNS {
        return Regression::Skipped {
            reason: format!("{} single-tone runs, need {SNR_MIN_RUNS}", points.len()),
        };
    }
    match fit_snr(&points, params, mode) {
        Ok(result) => Regression::Fitted { result },
        Err(e) => Regression::Failed { error: e.to_string() },
    }
}

fn theory_table(params: &SystemParams, runs: &[SweepRun], heating: &Regression<HeatingFit>) -> Option<TheoryTable> {
    let points: Vec<(f64, f64)> = runs
        .iter()
        .filter(|r| r.kind == RunKind::SingleTone)
        .map(|r| (r.drive.cooling_detuning(params), r.drive.n_c))
        .collect();
    if points.is_empty() {
        return None;
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.0), hi.max(p.0))
    });
    let variable = if angular_to_hz(hi - lo) < POWER_SWEEP_DETUNING_SPREAD_HZ {
        SweepVariable::Power
    } else {
        SweepVariable::Detuning
    };
    theory_at_points(params, variable, &points, heating.fitted().map(|h| &h.model)).ok()
}

/// Run the full analysis over a sweep. Per-run failures are isolated and
/// reported; the sweep itself only fails on an invalid configuration.
pub fn run_sweep(config: &SweepConfig, source: &dyn SpectrumSource) -> Result<SweepOutcome, SweepError> {
    config.validate()?;
    let params = config.params()?;

    let results: Vec<(usize, Result<SweepRun, SweepError>)> = config
        .runs
        .par_iter()
        .enumerate()
        .map(|(i, run)| (i, process_run(config, &params, run, source)))
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (i, result) in results {
        let spec = &config.runs[i];
        match result {
            Ok(r) => runs.push(r),
            Err(e) => failures.push(RunFailure {
                run_id: spec.id.clone(),
                session: spec.session.clone(),
                error: e.to_string(),
            }),
        }
    }
    runs.sort_by(|a, b| a.id.cmp(&b.id));
    failures.sort_by(|a, b| a.run_id.cmp(&b.run_id));

    let calibrations = pool_sessions(&runs);
    let (anchor, anchor_summary, anchor_error) = match build_anchor(config, &params, &runs) {
        Ok(Some((a, s))) => (Some(a), Some(s), None),
        Ok(None) => (None, None, None),
        Err(e) => (None, None, Some(e)),
    };

    for r in runs.iter_mut().filter(|r| r.kind == RunKind::SingleTone) {
        let opts = ThermoOptions {
            detuning_sigma: r.delta_c_sigma,
        };
        match calibrations.get(&r.session) {
            Some(cal) => match thermometry::occupancy_from_calibration(&r.fit, &params, &r.drive, cal, &opts) {
                Ok(e) => r.calibrated = Some(e),
                Err(e) => r.notes.push(format!("calibrated occupancy: {e}")),
            },
            None => r
                .notes
                .push(format!("no two-tone calibration in session {:?}", r.session)),
        }
        if let Some(a) = &anchor {
            match thermometry::occupancy_noise_anchored(&r.fit, &params, &r.drive, a, &opts) {
                Ok(e) => r.anchored = Some(e),
                Err(e) => r.notes.push(format!("anchored occupancy: {e}")),
            }
        }
    }

    let heating = heating_regression(config, &params, &runs);
    let snr = snr_regression(config, &params, &runs, &heating);
    let theory = theory_table(&params, &runs, &heating);

    let summary = SweepSummary {
        runs_total: config.runs.len(),
        runs_ok: runs.len(),
        runs_failed: failures.len(),
        failures,
        calibrations,
        anchor: anchor_summary,
        anchor_error,
        heating,
        snr,
        theory,
    };
    Ok(SweepOutcome { runs, summary })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl SweepOutcome {
    /// Ledger entries for successes and failures, in run-id order.
    pub fn ledger_entries(&self, params: &SystemParams) -> Vec<LedgerEntry> {
        let mut entries: Vec<LedgerEntry> = self
            .runs
            .iter()
            .map(|r| LedgerEntry::from_run(params, r))
            .chain(self.summary.failures.iter().map(LedgerEntry::from_failure))
            .collect();
        entries.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        entries
    }

    /// JSON-lines ledger, one entry per run.
    pub fn ledger_jsonl(&self, params: &SystemParams) -> String {
        let mut out = String::new();
        for e in self.ledger_entries(params) {
            out.push_str(&serde_json::to_string(&e).expect("ledger entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Plot-ready per-run table.
    pub fn runs_csv(&self, params: &SystemParams) -> String {
        let mut out = String::from(
            "run_id,session,kind,status,delta_c_hz,n_c,n_b,gamma_eff_hz,gamma_eff_sigma_hz,snr,snr_sigma,\
             n_f,n_f_sigma_lo,n_f_sigma_hi,n_f_anchored,n_f_anchored_sigma_lo,n_f_anchored_sigma_hi,c_cal\n",
        );
        for e in self.ledger_entries(params) {
            let run = self.runs.iter().find(|r| r.id == e.run_id);
            let Some(r) = run else {
                let _ = writeln!(out, "{},{},,failed{}", e.run_id, e.session, ",".repeat(14));
                continue;
            };
            let kind = match r.kind {
                RunKind::SingleTone => "single-tone",
                RunKind::TwoTone => "two-tone",
            };
            let primary = r.occupancy();
            let snr = r.snr();
            let _ = writeln!(
                out,
                "{},{},{},ok,{:e},{:e},{:e},{:e},{:e},{},{},{},{},{},{},{},{},{}",
                r.id,
                r.session,
                kind,
                angular_to_hz(r.drive.cooling_detuning(params)),
                r.drive.n_c,
                r.drive.n_b,
                angular_to_hz(r.fit.gamma_eff()),
                angular_to_hz(r.fit.sigma(LorentzianParam::GammaEff)),
                opt(snr.map(|s| s.0)),
                opt(snr.map(|s| s.1)),
                opt(primary.map(|p| p.n_f)),
                opt(primary.map(|p| p.sigma_lo)),
                opt(primary.map(|p| p.sigma_hi)),
                opt(r.anchored.map(|p| p.n_f)),
                opt(r.anchored.map(|p| p.sigma_lo)),
                opt(r.anchored.map(|p| p.sigma_hi)),
                opt(r.asymmetry.as_ref().map(|a| a.1.c_cal)),
            );
        }
        out
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), SweepError> {
    atomic_write(path, contents.as_bytes()).map_err(|e| SweepError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Write `ledger.jsonl`, `summary.json`, `runs.csv` and (when available)
/// `theory.csv` into `dir`, each atomically.
pub fn write_outputs(outcome: &SweepOutcome, params: &SystemParams, dir: &Path) -> Result<(), SweepError> {
    std::fs::create_dir_all(dir).map_err(|e| SweepError::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    write_file(&dir.join("ledger.jsonl"), &outcome.ledger_jsonl(params))?;
    write_file(&dir.join("summary.json"), &outcome.summary_json())?;
    write_file(&dir.join("runs.csv"), &outcome.runs_csv(params))?;
    if let Some(t) = &outcome.summary.theory {
        write_file(&dir.join("theory.csv"), &t.to_csv())?;
    }
    Ok(())
}
