//! Heterodyne and displacement spectra, synthetic measurement noise and the
//! detector noise-floor model.
//!
//! Heterodyne spectra are single-sided in detection frequency and stored on
//! an ordinary-frequency (Hz) grid, normalized to the shot-noise floor.

mod io;

pub use io::{read_spectrum, sidecar_path, spectrum_from_csv, spectrum_to_csv, write_spectrum};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, DriveConfig, ModelError, SystemParams};
use crate::units::{angular_to_hz, hz_to_angular};

/// Relative tolerance on grid uniformity.
pub const GRID_UNIFORMITY_TOL: f64 = 1e-9;
/// Each non-empty sideband must be covered to this many `Γ_eff` on each side.
pub const SIDEBAND_COVERAGE: f64 = 5.0;
/// Below this many averages the exact Gamma-distributed periodogram is drawn
/// instead of its Gaussian approximation, which would go negative.
pub const GAUSSIAN_MIN_AVERAGES: u64 = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("grid [{lo_hz:.6e}, {hi_hz:.6e}] Hz does not cover sideband at {center_hz:.6e} Hz ± {margin_hz:.3e} Hz")]
    GridCoverage {
        lo_hz: f64,
        hi_hz: f64,
        center_hz: f64,
        margin_hz: f64,
    },
    #[error("spectra are on different grids")]
    GridMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(String),
    #[error("malformed spectrum file: {0}")]
    Parse(String),
}

/// Uniform ordinary-frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start_hz: f64,
    pub step_hz: f64,
    pub len: usize,
}

impl FrequencyGrid {
    /// `len` points from `start_hz` to `stop_hz` inclusive.
    pub fn new(start_hz: f64, stop_hz: f64, len: usize) -> Result<Self, SpectrumError> {
        if len < 2 {
            return Err(SpectrumError::InvalidGrid("need at least two points".into()));
        }
        if !(start_hz.is_finite() && stop_hz.is_finite() && stop_hz > start_hz) {
            return Err(SpectrumError::InvalidGrid(format!(
                "need finite start < stop, got [{start_hz}, {stop_hz}]"
            )));
        }
        Ok(Self {
            start_hz,
            step_hz: (stop_hz - start_hz) / (len - 1) as f64,
            len,
        })
    }

    /// Grid spanning `[lo_hz, hi_hz]` with spacing no larger than `max_step_hz`.
    pub fn with_max_step(lo_hz: f64, hi_hz: f64, max_step_hz: f64) -> Result<Self, SpectrumError> {
        if !(max_step_hz > 0.0) {
            return Err(SpectrumError::InvalidGrid("step must be positive".into()));
        }
        let len = ((hi_hz - lo_hz) / max_step_hz).ceil() as usize + 1;
        Self::new(lo_hz, hi_hz, len.max(2))
    }

    pub fn stop_hz(&self) -> f64 {
        self.at(self.len - 1)
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start_hz + i as f64 * self.step_hz
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.at(i)).collect()
    }
}

/// Snapshot of the drive in ordinary-frequency units, stored with spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSnapshot {
    pub n_c: f64,
    pub n_b: f64,
    pub delta_mean_hz: f64,
    pub delta_hz: f64,
    pub delta_lo_hz: f64,
}

impl From<&DriveConfig> for DriveSnapshot {
    fn from(d: &DriveConfig) -> Self {
        Self {
            n_c: d.n_c,
            n_b: d.n_b,
            delta_mean_hz: angular_to_hz(d.delta_mean),
            delta_hz: angular_to_hz(d.delta),
            delta_lo_hz: angular_to_hz(d.delta_lo),
        }
    }
}

impl From<&DriveSnapshot> for DriveConfig {
    fn from(s: &DriveSnapshot) -> Self {
        Self {
            n_c: s.n_c,
            n_b: s.n_b,
            delta_mean: hz_to_angular(s.delta_mean_hz),
            delta: hz_to_angular(s.delta_hz),
            delta_lo: hz_to_angular(s.delta_lo_hz),
        }
    }
}

/// Acquisition record carried alongside a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumMeta {
    pub rbw_hz: f64,
    /// `None` for noiseless (analytic) spectra.
    pub averages: Option<u64>,
    pub delta_lo_hz: f64,
    pub drive: Option<DriveSnapshot>,
    pub shot_noise_reference: bool,
}

impl SpectrumMeta {
    pub fn plain(rbw_hz: f64) -> Self {
        Self {
            rbw_hz,
            averages: None,
            delta_lo_hz: 0.0,
            drive: None,
            shot_noise_reference: false,
        }
    }
}

/// A PSD sampled on a uniform ordinary-frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(freqs: Vec<f64>, psd: Vec<f64>, meta: SpectrumMeta) -> Result<Self, SpectrumError> {
        let s = Self { freqs, psd, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SpectrumError> {
        let n = self.freqs.len();
        if n != self.psd.len() {
            return Err(SpectrumError::InvalidSpectrum(format!(
                "{} frequencies but {} PSD values",
                n,
                self.psd.len()
            )));
        }
        if n < 2 {
            return Err(SpectrumError::InvalidGrid("need at least two points".into()));
        }
        let first = self.freqs[0];
        let last = self.freqs[n - 1];
        if !(first.is_finite() && last.is_finite() && last > first) {
            return Err(SpectrumError::InvalidGrid("frequencies must increase".into()));
        }
        let step = (last - first) / (n - 1) as f64;
        let tol = GRID_UNIFORMITY_TOL * first.abs().max(last.abs()).max(last - first);
        for (i, w) in self.freqs.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(SpectrumError::InvalidGrid(format!(
                    "not strictly increasing at bin {}",
                    i + 1
                )));
            }
            let expected = first + (i + 1) as f64 * step;
            if (w[1] - expected).abs() > tol {
                return Err(SpectrumError::InvalidGrid(format!(
                    "non-uniform spacing at bin {}",
                    i + 1
                )));
            }
        }
        if let Some(i) = self.psd.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SpectrumError::InvalidSpectrum(format!(
                "PSD must be finite and >= 0 (bin {i}: {})",
                self.psd[i]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn step_hz(&self) -> f64 {
        (self.freqs[self.len() - 1] - self.freqs[0]) / (self.len() - 1) as f64
    }

    /// Multiply every PSD value by `factor` (non-negative).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.psd.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Same PSD on a grid shifted by `shift_hz`.
    pub fn shifted(&self, shift_hz: f64) -> Self {
        let mut out = self.clone();
        out.freqs.iter_mut().for_each(|f| *f += shift_hz);
        out
    }
}

fn check_eta(eta: f64) -> Result<(), SpectrumError> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(SpectrumError::InvalidArgument {
            name: "eta",
            reason: format!("detection efficiency must lie in [0, 1], got {eta}"),
        })
    }
}

/// Centers (rad/s) of the blue-probe and cooling-tone sidebands in detection
/// frequency: `Δ_LO − δ` and `Δ_LO + δ`.
pub fn sideband_centers(drive: &DriveConfig) -> (f64, f64) {
    (drive.delta_lo - drive.delta, drive.delta_lo + drive.delta)
}

/// Grid reaching `linewidths` effective linewidths beyond each sideband with
/// non-zero weight, `bins_per_linewidth` bins per `Γ_eff`, coarsened if
/// needed to stay within `max_bins`.
pub fn sideband_grid(
    params: &SystemParams,
    drive: &DriveConfig,
    bins_per_linewidth: f64,
    linewidths: f64,
    max_bins: usize,
) -> Result<FrequencyGrid, SpectrumError> {
    if !(bins_per_linewidth > 0.0 && linewidths >= SIDEBAND_COVERAGE && max_bins >= 2) {
        return Err(SpectrumError::InvalidGrid(format!(
            "need bins_per_linewidth > 0, linewidths >= {SIDEBAND_COVERAGE} and max_bins >= 2"
        )));
    }
    let gamma_eff = model::effective_damping(params, drive);
    if !(gamma_eff > 0.0) {
        return Err(ModelError::Unstable { gamma_eff }.into());
    }
    let (center_b, center_c) = sideband_centers(drive);
    let (lo_center, hi_center) = if drive.n_b > 0.0 {
        (center_b.min(center_c), center_b.max(center_c))
    } else {
        (center_c, center_c)
    };
    let margin = angular_to_hz(linewidths * gamma_eff);
    let lo = angular_to_hz(lo_center) - margin;
    let hi = angular_to_hz(hi_center) + margin;
    let step = (angular_to_hz(gamma_eff) / bins_per_linewidth).max((hi - lo) / max_bins as f64);
    FrequencyGrid::with_max_step(lo, hi, step)
}

/// Shot-noise-normalized heterodyne PSD
/// `1 + ηΓ_eff[(n̄_f+1)Γ_b / (Γ_eff²/4 + (Ω+δ−Δ_LO)²) + n̄_f Γ_c / (Γ_eff²/4 + (Ω−δ−Δ_LO)²)]`.
///
/// The grid must cover every sideband with non-zero weight to ±5 Γ_eff.
pub fn heterodyne_psd(
    params: &SystemParams,
    drive: &DriveConfig,
    n_f: f64,
    eta: f64,
    grid: &FrequencyGrid,
) -> Result<Spectrum, SpectrumError> {
    check_eta(eta)?;
    if !(n_f.is_finite() && n_f >= 0.0) {
        return Err(SpectrumError::InvalidArgument {
            name: "n_f",
            reason: format!("occupancy must be finite and >= 0, got {n_f}"),
        });
    }
    drive.validate_heterodyne()?;
    let rates = model::scattering_rates(params, drive);
    let gamma_eff = params.gamma_m + rates.gamma_opt();
    if !(gamma_eff > 0.0) {
        return Err(ModelError::Unstable { gamma_eff }.into());
    }
    let (center_b, center_c) = sideband_centers(drive);
    let margin_hz = angular_to_hz(SIDEBAND_COVERAGE * gamma_eff);
    for (weight, center) in [(rates.gamma_b, center_b), (rates.gamma_c, center_c)] {
        let center_hz = angular_to_hz(center);
        if weight > 0.0 && (center_hz - margin_hz < grid.start_hz || center_hz + margin_hz > grid.stop_hz()) {
            return Err(SpectrumError::GridCoverage {
                lo_hz: grid.start_hz,
                hi_hz: grid.stop_hz(),
                center_hz,
                margin_hz,
            });
        }
    }

    let hw2 = 0.25 * gamma_eff * gamma_eff;
    let w_b = eta * gamma_eff * (n_f + 1.0) * rates.gamma_b;
    let w_c = eta * gamma_eff * n_f * rates.gamma_c;
    let freqs = grid.freqs();
    let psd = freqs
        .iter()
        .map(|&f| {
            let w = hz_to_angular(f);
            let db = w - center_b;
            let dc = w - center_c;
            1.0 + w_b / (hw2 + db * db) + w_c / (hw2 + dc * dc)
        })
        .collect();
    Spectrum::new(
        freqs,
        psd,
        SpectrumMeta {
            rbw_hz: grid.step_hz,
            averages: None,
            delta_lo_hz: angular_to_hz(drive.delta_lo),
            drive: Some(DriveSnapshot::from(drive)),
            shot_noise_reference: false,
        },
    )
}

/// Two-sided displacement PSD in units of `x_zpf²` (per rad/s) at angular
/// frequency `omega` in the lab frame.
pub fn displacement_psd_at(params: &SystemParams, drive: &DriveConfig, omega: f64) -> Result<f64, SpectrumError> {
    let state = model::dressed_state(params, drive)?;
    Ok(displacement_from_state(params, &state, omega))
}

fn displacement_from_state(params: &SystemParams, state: &model::DressedState, omega: f64) -> f64 {
    let hw2 = 0.25 * state.gamma_eff * state.gamma_eff;
    let up = omega - state.omega_eff;
    let down = omega + state.omega_eff;
    (params.gamma_m * (params.n_th + 1.0) + state.gamma_c) / (up * up + hw2)
        + (params.gamma_m * params.n_th + state.gamma_b) / (down * down + hw2)
}

/// Two-sided displacement PSD `S_xx / x_zpf²` over a set of lab-frame
/// angular frequencies.
pub fn displacement_psd(params: &SystemParams, drive: &DriveConfig, omegas: &[f64]) -> Result<Vec<f64>, SpectrumError> {
    let state = model::dressed_state(params, drive)?;
    Ok(omegas
        .iter()
        .map(|&w| displacement_from_state(params, &state, w))
        .collect())
}

/// Draw a measured-like spectrum around an analytic one.
///
/// Every bin is independent with mean equal to the analytic value and
/// relative standard deviation `1/√averages`. From
/// [`GAUSSIAN_MIN_AVERAGES`] averages up the Gaussian approximation is used;
/// below it the exact Gamma law of an averaged periodogram, which has the
/// same two moments and stays non-negative. Deterministic for a given seed.
pub fn synthesize(spectrum: &Spectrum, averages: u64, seed: u64) -> Result<Spectrum, SpectrumError> {
    if averages == 0 {
        return Err(SpectrumError::InvalidArgument {
            name: "averages",
            reason: "must be >= 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = averages as f64;
    let psd = if averages >= GAUSSIAN_MIN_AVERAGES {
        let rel = 1.0 / n.sqrt();
        spectrum
            .psd
            .iter()
            .map(|&mean| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (mean * (1.0 + rel * z)).max(0.0)
            })
            .collect()
    } else {
        let unit = Gamma::new(n, 1.0 / n).expect("shape and scale are positive");
        spectrum.psd.iter().map(|&mean| mean * unit.sample(&mut rng)).collect()
    };
    let mut meta = spectrum.meta.clone();
    meta.averages = Some(averages);
    Spectrum::new(spectrum.freqs.clone(), psd, meta)
}

/// Synthetic shot-noise reference: unit mean, `averages`-averaged noise.
pub fn shot_noise_reference(grid: &FrequencyGrid, averages: u64, seed: u64) -> Result<Spectrum, SpectrumError> {
    let mut meta = SpectrumMeta::plain(grid.step_hz);
    meta.shot_noise_reference = true;
    let flat = Spectrum::new(grid.freqs(), vec![1.0; grid.len], meta)?;
    synthesize(&flat, averages, seed)
}

/// Check that a normalized shot-noise reference has mean within 3σ of 1.
pub fn check_shot_noise_reference(spectrum: &Spectrum) -> Result<(), SpectrumError> {
    let averages = spectrum
        .meta
        .averages
        .ok_or_else(|| SpectrumError::InvalidSpectrum("shot-noise reference needs an average count".into()))?;
    let n = spectrum.len() as f64;
    let mean = spectrum.psd.iter().sum::<f64>() / n;
    let sigma = 1.0 / (averages as f64 * n).sqrt();
    if (mean - 1.0).abs() <= 3.0 * sigma {
        Ok(())
    } else {
        Err(SpectrumError::InvalidSpectrum(format!(
            "shot-noise reference mean {mean} deviates from 1 by more than 3σ ({sigma:e})"
        )))
    }
}

/// Divide a raw detector spectrum by its shot-noise reference, bin by bin,
/// which removes the frequency-dependent detector gain.
pub fn normalize_to_shot_noise(raw: &Spectrum, shot: &Spectrum) -> Result<Spectrum, SpectrumError> {
    if raw.freqs != shot.freqs {
        return Err(SpectrumError::GridMismatch);
    }
    if let Some(i) = shot.psd.iter().position(|v| !(*v > 0.0)) {
        return Err(SpectrumError::InvalidSpectrum(format!(
            "shot-noise reference is not positive at bin {i}"
        )));
    }
    let psd = raw.psd.iter().zip(&shot.psd).map(|(r, s)| r / s).collect();
    Spectrum::new(raw.freqs.clone(), psd, raw.meta.clone())
}

/// Linear rise of the normalized floor with reflected optical power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloorModel {
    pub intercept: f64,
    /// Floor increase per watt of reflected power.
    pub slope: f64,
}

impl NoiseFloorModel {
    pub fn floor_at(&self, reflected_power_w: f64) -> f64 {
        self.intercept + self.slope * reflected_power_w
    }

    /// Least-squares line through `(reflected power W, floor)` points. A
    /// negative slope is projected to zero (the floor cannot fall with power).
    pub fn fit(points: &[(f64, f64)]) -> Result<Self, SpectrumError> {
        if points.len() < 2 {
            return Err(SpectrumError::InvalidArgument {
                name: "points",
                reason: "need at least two (power, floor) points".into(),
            });
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if !(sxx > 0.0) {
            return Err(SpectrumError::InvalidArgument {
                name: "points",
                reason: "powers must not all be equal".into(),
            });
        }
        let slope = sxy / sxx;
        let model = if slope >= 0.0 {
            Self {
                intercept: my - slope * mx,
                slope,
            }
        } else {
            Self {
                intercept: my,
                slope: 0.0,
            }
        };
        if !(model.intercept > 0.0) {
            return Err(SpectrumError::InvalidArgument {
                name: "points",
                reason: format!("fitted intercept {} is not positive", model.intercept),
            });
        }
        Ok(model)
    }
}

/// Add the power-dependent floor rise `slope × P` to every bin.
pub fn apply_noise_floor(
    spectrum: &Spectrum,
    model: &NoiseFloorModel,
    reflected_power_w: f64,
) -> Result<Spectrum, SpectrumError> {
    if !(reflected_power_w.is_finite() && reflected_power_w >= 0.0) {
        return Err(SpectrumError::InvalidArgument {
            name: "reflected_power_w",
            reason: format!("must be finite and >= 0, got {reflected_power_w}"),
        });
    }
    let offset = model.slope * reflected_power_w;
    let mut out = spectrum.clone();
    out.psd.iter_mut().for_each(|v| *v += offset);
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n_c: f64, n_b: f64) -> (SystemParams, DriveConfig) {
        let p = SystemParams::demo();
        let d = DriveConfig::from_cooling_detuning(&p, -p.omega_m, hz_to_angular(-20e6), hz_to_angular(60e6), n_c, n_b);
        (p, d)
    }

    fn wide_grid() -> FrequencyGrid {
        FrequencyGrid::new(0.0, 120e6, 24001).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = FrequencyGrid::new(1.0, 3.0, 5).unwrap();
        assert_eq!(g.freqs(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        assert!(FrequencyGrid::new(1.0, 1.0, 5).is_err());
        assert!(FrequencyGrid::new(0.0, 1.0, 1).is_err());
        let g = FrequencyGrid::with_max_step(0.0, 10.0, 3.0).unwrap();
        assert!(g.step_hz <= 3.0 && g.stop_hz() == 10.0);
    }

    #[test]
    fn spectrum_validation() {
        let meta = SpectrumMeta::plain(1.0);
        assert!(Spectrum::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0], meta.clone()).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0, 2.5], vec![1.0; 3], meta.clone()).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 1.0], meta.clone()).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0, 2.0], vec![1.0, f64::NAN, 1.0], meta).is_err());
    }

    #[test]
    fn single_tone_spectrum_shape() {
        let (p, d) = setup(200.0, 0.0);
        let s = heterodyne_psd(&p, &d, 0.2, 0.1, &wide_grid()).unwrap();
        let imax = s.psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let center_hz = angular_to_hz(d.delta_lo + d.delta);
        assert!((s.freqs[imax] - center_hz).abs() <= s.step_hz());
        let st = model::dressed_state(&p, &d).unwrap();
        let peak = 1.0 + 4.0 * 0.1 * 0.2 * st.gamma_c / st.gamma_eff;
        assert!((s.psd[imax] - peak).abs() < 1e-9);
    }

    #[test]
    fn zero_efficiency_is_flat() {
        let (p, d) = setup(200.0, 40.0);
        let s = heterodyne_psd(&p, &d, 0.3, 0.0, &wide_grid()).unwrap();
        assert!(s.psd.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let (p, d) = setup(200.0, 40.0);
        let narrow = FrequencyGrid::new(35e6, 45e6, 101).unwrap();
        assert!(matches!(
            heterodyne_psd(&p, &d, 0.3, 0.1, &narrow),
            Err(SpectrumError::GridCoverage { .. })
        ));
        assert!(heterodyne_psd(&p, &d, 0.3, 1.5, &wide_grid()).is_err());
        let mut bad = d;
        bad.delta = -bad.delta;
        assert!(matches!(
            heterodyne_psd(&p, &bad, 0.3, 0.1, &wide_grid()),
            Err(SpectrumError::Model(ModelError::HeterodyneOrdering { .. }))
        ));
    }

    #[test]
    fn bare_oscillator_displacement_lobes() {
        let (p, mut d) = setup(0.0, 0.0);
        d.n_c = 0.0;
        let up = displacement_psd_at(&p, &d, p.omega_m).unwrap();
        let down = displacement_psd_at(&p, &d, -p.omega_m).unwrap();
        let hw2 = 0.25 * p.gamma_m * p.gamma_m;
        // Lobe weights differ by exactly Γ_m.
        assert!(((up - down) * hw2 - p.gamma_m).abs() < 1e-9 * p.gamma_m);

        let cold = p.with_temperature(0.0);
        // Only the tail of the positive-frequency lobe remains at −Ω_m.
        let neg = displacement_psd_at(&cold, &d, -p.omega_m).unwrap();
        let pos = displacement_psd_at(&cold, &d, p.omega_m).unwrap();
        let tail = cold.gamma_m / (4.0 * p.omega_m * p.omega_m + hw2);
        assert!((neg - tail).abs() <= 1e-12 * tail);
        assert!(neg < 1e-10 * pos);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let (p, d) = setup(200.0, 40.0);
        let s = heterodyne_psd(&p, &d, 0.3, 0.1, &wide_grid()).unwrap();
        let a = synthesize(&s, 100, 7).unwrap();
        let b = synthesize(&s, 100, 7).unwrap();
        let c = synthesize(&s, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.psd, c.psd);
        assert_eq!(a.meta.averages, Some(100));
        assert!(synthesize(&s, 0, 1).is_err());
    }

    #[test]
    fn synthesis_converges_to_analytic() {
        let (p, d) = setup(200.0, 40.0);
        let s = heterodyne_psd(&p, &d, 0.3, 0.1, &wide_grid()).unwrap();
        let a = synthesize(&s, 100_000_000, 3).unwrap();
        for (x, y) in a.psd.iter().zip(&s.psd) {
            assert!((x - y).abs() <= 1e-3 * y);
        }
    }

    #[test]
    fn synthesis_spread_on_flat_spectrum() {
        let g = FrequencyGrid::new(0.0, 1.0, 20_000).unwrap();
        let flat = Spectrum::new(g.freqs(), vec![1.0; g.len], SpectrumMeta::plain(g.step_hz)).unwrap();
        let s = synthesize(&flat, 100, 11).unwrap();
        let n = s.len() as f64;
        let mean = s.psd.iter().sum::<f64>() / n;
        let std = (s.psd.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.085..=0.115).contains(&std), "{std}");
    }

    #[test]
    fn few_averages_stay_non_negative() {
        let g = FrequencyGrid::new(0.0, 1.0, 5000).unwrap();
        let flat = Spectrum::new(g.freqs(), vec![1.0; g.len], SpectrumMeta::plain(g.step_hz)).unwrap();
        let s = synthesize(&flat, 1, 5).unwrap();
        assert!(s.psd.iter().all(|v| *v >= 0.0));
        let mean = s.psd.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0).abs() < 5.0 / (s.len() as f64).sqrt());
    }

    #[test]
    fn shot_noise_reference_checks() {
        let g = FrequencyGrid::new(0.0, 1.0, 4000).unwrap();
        let r = shot_noise_reference(&g, 200, 9).unwrap();
        assert!(r.meta.shot_noise_reference);
        check_shot_noise_reference(&r).unwrap();
        let off = r.scaled(1.05);
        assert!(check_shot_noise_reference(&off).is_err());
    }

    #[test]
    fn normalization_removes_gain_ripple() {
        let g = FrequencyGrid::new(0.0, 1.0, 101).unwrap();
        let gain: Vec<f64> = g.freqs().iter().map(|f| 2.0 + (6.0 * f).sin()).collect();
        let truth: Vec<f64> = g
            .freqs()
            .iter()
            .map(|f| 1.0 + (-((f - 0.5) / 0.05).powi(2)).exp())
            .collect();
        let raw = Spectrum::new(
            g.freqs(),
            truth.iter().zip(&gain).map(|(t, k)| t * k).collect(),
            SpectrumMeta::plain(g.step_hz),
        )
        .unwrap();
        let shot = Spectrum::new(g.freqs(), gain, SpectrumMeta::plain(g.step_hz)).unwrap();
        let n = normalize_to_shot_noise(&raw, &shot).unwrap();
        for (a, b) in n.psd.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
        let other = raw.shifted(1.0);
        assert!(matches!(
            normalize_to_shot_noise(&other, &shot),
            Err(SpectrumError::GridMismatch)
        ));
    }

    #[test]
    fn noise_floor_is_linear() {
        let g = FrequencyGrid::new(0.0, 1.0, 11).unwrap();
        let flat = Spectrum::new(g.freqs(), vec![1.0; 11], SpectrumMeta::plain(g.step_hz)).unwrap();
        let m = NoiseFloorModel {
            intercept: 1.0,
            slope: 0.0,
        };
        assert_eq!(apply_noise_floor(&flat, &m, 1e-4).unwrap(), flat);
        let m = NoiseFloorModel {
            intercept: 1.0,
            slope: 200.0,
        };
        let one = apply_noise_floor(&flat, &m, 50e-6).unwrap();
        let two = apply_noise_floor(&flat, &m, 100e-6).unwrap();
        assert!(((two.psd[0] - 1.0) - 2.0 * (one.psd[0] - 1.0)).abs() < 1e-15);
        assert!(apply_noise_floor(&flat, &m, -1.0).is_err());
    }

    #[test]
    fn noise_floor_regression() {
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|i| {
                let p = 20e-6 * (i + 1) as f64;
                (p, 1.0 + 150.0 * p)
            })
            .collect();
        let m = NoiseFloorModel::fit(&pts).unwrap();
        assert!((m.slope - 150.0).abs() < 1e-9 && (m.intercept - 1.0).abs() < 1e-12);
        let falling: Vec<(f64, f64)> = pts.iter().map(|(p, f)| (*p, 2.0 - (f - 1.0))).collect();
        assert_eq!(NoiseFloorModel::fit(&falling).unwrap().slope, 0.0);
    }
}
