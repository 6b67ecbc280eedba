//! Shared-width Lorentzian sideband fits
//! `S(ω) = c + Γ_eff A₁/(Γ_eff²/4 + (ω−ω₁)²) + Γ_eff A₂/(Γ_eff²/4 + (ω−ω₂)²)`.
//!
//! The solver works in bin units: `x = (f − f_mid)/Δf`. Each Lorentzian then
//! reads `w a / (w²/4 + (x − x₀)²)` and maps back through `A = 2π Δf a`,
//! `ω₀ = 2π(f_mid + Δf x₀)`, `Γ_eff = 2π Δf w`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{self, Convergence, LeastSquares, LmError, LmOptions};
use super::{FitDiagnostics, FitError, FitRecord};
use crate::spectra::Spectrum;
use crate::units::{angular_to_hz, hz_to_angular};

/// Bins a peak's residual must clear, in robust standard deviations of the
/// background.
pub const PEAK_THRESHOLD_SIGMAS: f64 = 5.0;
/// Minimum separation, in bins, between the two initial peak candidates.
pub const MIN_PEAK_SEPARATION_BINS: usize = 5;
/// Each fitted peak must lie this many half-widths inside the grid.
pub const COVERAGE_HALF_WIDTHS: f64 = 3.0;
const SMOOTHING_HALF_WIDTH: usize = 2;
const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    Single,
    Double,
}

/// Per-bin weights of the least-squares cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Every bin counts equally.
    #[default]
    Uniform,
    /// Bin standard deviation `S(ω)/√averages`, taken from a first uniform
    /// pass and held fixed during the refit.
    Statistical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LorentzianParam {
    Background,
    Area1,
    Center1,
    Area2,
    Center2,
    GammaEff,
}

impl LorentzianParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Background => "background",
            Self::Area1 => "area1",
            Self::Center1 => "center1",
            Self::Area2 => "area2",
            Self::Center2 => "center2",
            Self::GammaEff => "gamma_eff",
        }
    }

    fn index(self, mode: FitMode) -> Option<usize> {
        match (mode, self) {
            (_, Self::Background) => Some(0),
            (_, Self::Area1) => Some(1),
            (_, Self::Center1) => Some(2),
            (FitMode::Single, Self::GammaEff) => Some(3),
            (FitMode::Single, _) => None,
            (FitMode::Double, Self::Area2) => Some(3),
            (FitMode::Double, Self::Center2) => Some(4),
            (FitMode::Double, Self::GammaEff) => Some(5),
        }
    }

    pub fn all(mode: FitMode) -> &'static [Self] {
        match mode {
            FitMode::Single => &[Self::Background, Self::Area1, Self::Center1, Self::GammaEff],
            FitMode::Double => &[
                Self::Background,
                Self::Area1,
                Self::Center1,
                Self::Area2,
                Self::Center2,
                Self::GammaEff,
            ],
        }
    }
}

/// Lorentzian parameters in angular units (areas in PSD × rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub background: f64,
    pub area1: f64,
    pub center1: f64,
    pub area2: f64,
    pub center2: f64,
    pub gamma_eff: f64,
}

impl LorentzianParams {
    /// Model value at angular frequency `omega`.
    pub fn eval(&self, omega: f64, mode: FitMode) -> f64 {
        let hw2 = 0.25 * self.gamma_eff * self.gamma_eff;
        let l = |a: f64, w0: f64| self.gamma_eff * a / (hw2 + (omega - w0).powi(2));
        let mut v = self.background + l(self.area1, self.center1);
        if mode == FitMode::Double {
            v += l(self.area2, self.center2);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub lm: LmOptions,
    /// Parameters held at their initial values.
    pub fixed: Vec<LorentzianParam>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Uniform,
            lm: LmOptions::default(),
            fixed: Vec::new(),
        }
    }
}

impl FitOptions {
    pub fn statistical() -> Self {
        Self {
            weighting: Weighting::Statistical,
            ..Self::default()
        }
    }
}

/// Converged Lorentzian fit. Sideband 1 is always the lower-frequency peak,
/// which in a two-tone heterodyne spectrum belongs to the cooling tone.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianFitResult {
    pub mode: FitMode,
    pub params: LorentzianParams,
    /// Covariance over [`LorentzianParam::all`] in angular units; rows and
    /// columns of fixed parameters are zero.
    pub covariance: DMatrix<f64>,
    pub fixed: Vec<LorentzianParam>,
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub convergence: Convergence,
    pub weighting: Weighting,
}

impl LorentzianFitResult {
    pub fn background(&self) -> f64 {
        self.params.background
    }

    pub fn area1(&self) -> f64 {
        self.params.area1
    }

    pub fn area2(&self) -> Option<f64> {
        (self.mode == FitMode::Double).then_some(self.params.area2)
    }

    pub fn center1(&self) -> f64 {
        self.params.center1
    }

    pub fn center2(&self) -> Option<f64> {
        (self.mode == FitMode::Double).then_some(self.params.center2)
    }

    pub fn gamma_eff(&self) -> f64 {
        self.params.gamma_eff
    }

    pub fn value(&self, p: LorentzianParam) -> f64 {
        let v = &self.params;
        match p {
            LorentzianParam::Background => v.background,
            LorentzianParam::Area1 => v.area1,
            LorentzianParam::Center1 => v.center1,
            LorentzianParam::Area2 => v.area2,
            LorentzianParam::Center2 => v.center2,
            LorentzianParam::GammaEff => v.gamma_eff,
        }
    }

    /// Covariance entry between two parameters (zero if either is absent).
    pub fn cov(&self, a: LorentzianParam, b: LorentzianParam) -> f64 {
        match (a.index(self.mode), b.index(self.mode)) {
            (Some(i), Some(j)) => self.covariance[(i, j)],
            _ => 0.0,
        }
    }

    pub fn sigma(&self, p: LorentzianParam) -> f64 {
        self.cov(p, p).max(0.0).sqrt()
    }

    /// Peak height of sideband 1 above the background, `4A₁/Γ_eff`.
    pub fn peak_height1(&self) -> f64 {
        4.0 * self.params.area1 / self.params.gamma_eff
    }

    /// Uncertainty of [`Self::peak_height1`] from the covariance.
    pub fn peak_height1_sigma(&self) -> f64 {
        use LorentzianParam::{Area1, GammaEff};
        let h = self.peak_height1();
        let ra = 1.0 / self.params.area1;
        let rg = -1.0 / self.params.gamma_eff;
        let rel_var = ra * ra * self.cov(Area1, Area1)
            + rg * rg * self.cov(GammaEff, GammaEff)
            + 2.0 * ra * rg * self.cov(Area1, GammaEff);
        h.abs() * rel_var.max(0.0).sqrt()
    }

    /// Model values on the spectrum's grid.
    pub fn model(&self, freqs_hz: &[f64]) -> Vec<f64> {
        freqs_hz
            .iter()
            .map(|&f| self.params.eval(hz_to_angular(f), self.mode))
            .collect()
    }

    /// Serializable record in ordinary-frequency units.
    pub fn to_record(&self) -> FitRecord {
        let params = LorentzianParam::all(self.mode);
        let scale: Vec<f64> = params
            .iter()
            .map(|p| match p {
                LorentzianParam::Background => 1.0,
                _ => 1.0 / TAU,
            })
            .collect();
        let names = params
            .iter()
            .map(|p| match p {
                LorentzianParam::Background => p.name().to_string(),
                _ => format!("{}_hz", p.name()),
            })
            .collect();
        let values = params.iter().zip(&scale).map(|(p, s)| self.value(*p) * s).collect();
        let sigmas = params.iter().zip(&scale).map(|(p, s)| self.sigma(*p) * s).collect();
        let n = params.len();
        let covariance = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.covariance[(i, j)] * scale[i] * scale[j])
            .collect();
        FitRecord {
            kind: match self.mode {
                FitMode::Single => "lorentzian-single".into(),
                FitMode::Double => "lorentzian-double".into(),
            },
            names,
            values,
            sigmas,
            covariance,
            fixed: self.fixed.iter().map(|p| p.name().to_string()).collect(),
            diagnostics: FitDiagnostics {
                iterations: self.iterations,
                evaluations: self.evaluations,
                convergence: self.convergence,
                residual_norm: self.residual_norm,
                reduced_chi2: self.reduced_chi2,
                dof: self.dof,
                weighting: Some(self.weighting),
                flags: Vec::new(),
            },
        }
    }

    /// Inverse of [`Self::to_record`].
    pub fn from_record(record: &FitRecord) -> Result<Self, FitError> {
        let mode = match record.kind.as_str() {
            "lorentzian-single" => FitMode::Single,
            "lorentzian-double" => FitMode::Double,
            other => {
                return Err(FitError::InvalidInput(format!(
                    "not a Lorentzian fit record: `{other}`"
                )))
            }
        };
        let params = LorentzianParam::all(mode);
        let n = params.len();
        if record.values.len() != n || record.covariance.len() != n * n {
            return Err(FitError::InvalidInput("record has the wrong number of entries".into()));
        }
        let scale: Vec<f64> = params
            .iter()
            .map(|p| if *p == LorentzianParam::Background { 1.0 } else { TAU })
            .collect();
        let get = |p: LorentzianParam| p.index(mode).map(|i| record.values[i] * scale[i]).unwrap_or(0.0);
        let values = LorentzianParams {
            background: get(LorentzianParam::Background),
            area1: get(LorentzianParam::Area1),
            center1: get(LorentzianParam::Center1),
            area2: get(LorentzianParam::Area2),
            center2: get(LorentzianParam::Center2),
            gamma_eff: get(LorentzianParam::GammaEff),
        };
        if !(values.gamma_eff > 0.0) {
            return Err(FitError::InvalidInput("gamma_eff must be positive".into()));
        }
        let covariance = DMatrix::from_fn(n, n, |i, j| record.covariance[i * n + j] * scale[i] * scale[j]);
        let fixed = params
            .iter()
            .filter(|p| record.fixed.iter().any(|f| f == p.name()))
            .copied()
            .collect();
        let d = &record.diagnostics;
        Ok(Self {
            mode,
            params: values,
            covariance,
            fixed,
            residual_norm: d.residual_norm,
            reduced_chi2: d.reduced_chi2,
            dof: d.dof,
            iterations: d.iterations,
            evaluations: d.evaluations,
            convergence: d.convergence,
            weighting: d.weighting.unwrap_or_default(),
        })
    }
}

struct Problem<'a> {
    mode: FitMode,
    x: Vec<f64>,
    y: &'a [f64],
    inv_sigma: Vec<f64>,
}

impl Problem<'_> {
    fn peaks(&self) -> &'static [(usize, usize)] {
        match self.mode {
            FitMode::Single => &[(1, 2)],
            FitMode::Double => &[(1, 2), (3, 4)],
        }
    }

    fn width_index(&self) -> usize {
        match self.mode {
            FitMode::Single => 3,
            FitMode::Double => 5,
        }
    }

    fn eval(&self, q: &[f64], x: f64) -> f64 {
        let w = q[self.width_index()];
        let hw2 = 0.25 * w * w;
        q[0] + self
            .peaks()
            .iter()
            .map(|&(ia, ix)| w * q[ia] / (hw2 + (x - q[ix]).powi(2)))
            .sum::<f64>()
    }
}

impl LeastSquares for Problem<'_> {
    fn n_params(&self) -> usize {
        match self.mode {
            FitMode::Single => 4,
            FitMode::Double => 6,
        }
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, q: &[f64], out: &mut [f64]) {
        for (i, &x) in self.x.iter().enumerate() {
            out[i] = (self.eval(q, x) - self.y[i]) * self.inv_sigma[i];
        }
    }

    fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let iw = self.width_index();
        let w = q[iw];
        let hw2 = 0.25 * w * w;
        let mut jac = DMatrix::zeros(self.x.len(), self.n_params());
        for (i, &x) in self.x.iter().enumerate() {
            let s = self.inv_sigma[i];
            jac[(i, 0)] = s;
            for &(ia, ix) in self.peaks() {
                let a = q[ia];
                let u = x - q[ix];
                let d = hw2 + u * u;
                jac[(i, ia)] = s * w / d;
                jac[(i, ix)] = s * 2.0 * w * a * u / (d * d);
                jac[(i, iw)] += s * (a / d - 0.5 * a * w * w / (d * d));
            }
        }
        jac
    }

    fn feasible(&self, q: &[f64]) -> bool {
        q[self.width_index()] > 0.0 && self.peaks().iter().all(|&(ia, _)| q[ia] >= 0.0)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn boxcar(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Full width at half height around bin `peak`, in bins.
fn fwhm_bins(s: &[f64], peak: usize, base: f64) -> f64 {
    let half = base + 0.5 * (s[peak] - base);
    let cross = |dir: isize| -> Option<f64> {
        let mut i = peak as isize;
        loop {
            let next = i + dir;
            if next < 0 || next as usize >= s.len() {
                return None;
            }
            let (a, b) = (s[i as usize], s[next as usize]);
            if b < half {
                return Some((i - peak as isize).abs() as f64 + (a - half) / (a - b));
            }
            i = next;
        }
    };
    match (cross(-1), cross(1)) {
        (Some(l), Some(r)) => l + r,
        (Some(d), None) | (None, Some(d)) => 2.0 * d,
        (None, None) => s.len() as f64 / 2.0,
    }
}

/// Initial guess in bin units, following the median / local-maximum /
/// half-prominence recipe. Peaks are returned in ascending frequency.
fn initial_guess(y: &[f64], mode: FitMode) -> Result<Vec<f64>, FitError> {
    let c0 = median(y);
    let deviations: Vec<f64> = y.iter().map(|v| (v - c0).abs()).collect();
    let sigma = MAD_TO_SIGMA * median(&deviations);
    let threshold = c0 + PEAK_THRESHOLD_SIGMAS * sigma;
    if !y.iter().any(|&v| v > threshold) {
        return Err(FitError::PeakNotFound { threshold });
    }
    let s = boxcar(y, SMOOTHING_HALF_WIDTH);
    let p1 = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap_or(0);
    let h1 = (s[p1] - c0).max(f64::MIN_POSITIVE);
    let w0 = fwhm_bins(&s, p1, c0).max(1.0);
    let x = |i: usize| i as f64 - 0.5 * (y.len() - 1) as f64;

    match mode {
        FitMode::Single => Ok(vec![c0, 0.25 * h1 * w0, x(p1), w0]),
        FitMode::Double => {
            // Search the second peak after removing the first one's estimated
            // Lorentzian, so its shoulder cannot pose as a peak.
            let exclusion = (MIN_PEAK_SEPARATION_BINS as f64).max(w0);
            let r: Vec<f64> = s
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let u = 2.0 * (i as f64 - p1 as f64) / w0;
                    v - h1 / (1.0 + u * u)
                })
                .collect();
            let is_local_max = |i: usize| (i == 0 || r[i] >= r[i - 1]) && (i + 1 == r.len() || r[i] >= r[i + 1]);
            let p2 = (0..r.len())
                .filter(|&i| (i as f64 - p1 as f64).abs() > exclusion && is_local_max(i))
                .max_by(|&a, &b| r[a].total_cmp(&r[b]))
                .ok_or(FitError::PeakNotFound { threshold })?;
            let h2 = (r[p2] - c0).max(0.0);
            let (lo, hi) = if p1 < p2 {
                ((p1, h1), (p2, h2))
            } else {
                ((p2, h2), (p1, h1))
            };
            Ok(vec![c0, 0.25 * lo.1 * w0, x(lo.0), 0.25 * hi.1 * w0, x(hi.0), w0])
        }
    }
}

/// Fit one or two shared-width Lorentzians to a spectrum.
///
/// `init` overrides the automatic initial guess and supplies the values of
/// any parameters listed in `options.fixed`.
pub fn fit_lorentzians(
    spectrum: &Spectrum,
    mode: FitMode,
    init: Option<&LorentzianParams>,
    options: &FitOptions,
) -> Result<LorentzianFitResult, FitError> {
    spectrum.validate()?;
    let n = spectrum.len();
    let step = spectrum.step_hz();
    let f_mid = 0.5 * (spectrum.freqs[0] + spectrum.freqs[n - 1]);
    let x: Vec<f64> = spectrum.freqs.iter().map(|f| (f - f_mid) / step).collect();
    let to_bins = |p: &LorentzianParams| -> Vec<f64> {
        let a = |v: f64| v / (TAU * step);
        let c = |w: f64| (angular_to_hz(w) - f_mid) / step;
        let mut q = vec![p.background, a(p.area1), c(p.center1)];
        if mode == FitMode::Double {
            q.extend([a(p.area2), c(p.center2)]);
        }
        q.push(a(p.gamma_eff));
        q
    };
    let start = match init {
        Some(p) => {
            let mut q = to_bins(p);
            // Keep sideband 1 the lower one from the start.
            if mode == FitMode::Double && q[2] > q[4] {
                q.swap(1, 3);
                q.swap(2, 4);
            }
            q
        }
        None => initial_guess(&spectrum.psd, mode)?,
    };
    if options.fixed.iter().any(|p| p.index(mode).is_none()) {
        return Err(FitError::InvalidInput(
            "fixed parameter not present in this fit mode".into(),
        ));
    }
    let mut free = vec![true; start.len()];
    for p in &options.fixed {
        if let Some(i) = p.index(mode) {
            free[i] = false;
        }
    }

    let mut problem = Problem {
        mode,
        x,
        y: &spectrum.psd,
        inv_sigma: vec![1.0; n],
    };
    let mut report = lm::minimize_masked(&problem, &start, &free, &options.lm).map_err(FitError::from)?;
    if options.weighting == Weighting::Statistical {
        let root_n = (spectrum.meta.averages.unwrap_or(1) as f64).sqrt();
        let inv_sigma: Vec<f64> = problem
            .x
            .iter()
            .map(|&xi| {
                let m = problem.eval(&report.params, xi);
                if m > 0.0 {
                    root_n / m
                } else {
                    0.0
                }
            })
            .collect();
        problem.inv_sigma = inv_sigma;
        let first = report.params.clone();
        report = lm::minimize_masked(&problem, &first, &free, &options.lm).map_err(FitError::from)?;
    }

    let mut q = report.params.clone();
    let cov_free = report.covariance();
    let np = q.len();
    let mut cov = DMatrix::zeros(np, np);
    for (a, &i) in report.free.iter().enumerate() {
        for (b, &j) in report.free.iter().enumerate() {
            cov[(i, j)] = cov_free[(a, b)];
        }
    }
    let mut fixed = options.fixed.clone();
    if mode == FitMode::Double && q[2] > q[4] {
        q.swap(1, 3);
        q.swap(2, 4);
        let perm = [0, 3, 4, 1, 2, 5];
        cov = DMatrix::from_fn(np, np, |i, j| cov[(perm[i], perm[j])]);
        for p in fixed.iter_mut() {
            *p = match *p {
                LorentzianParam::Area1 => LorentzianParam::Area2,
                LorentzianParam::Area2 => LorentzianParam::Area1,
                LorentzianParam::Center1 => LorentzianParam::Center2,
                LorentzianParam::Center2 => LorentzianParam::Center1,
                other => other,
            };
        }
    }

    let k = TAU * step;
    let scale: Vec<f64> = (0..np).map(|i| if i == 0 { 1.0 } else { k }).collect();
    let cov = DMatrix::from_fn(np, np, |i, j| cov[(i, j)] * scale[i] * scale[j]);
    let center = |xi: f64| hz_to_angular(f_mid + step * xi);
    let params = match mode {
        FitMode::Single => LorentzianParams {
            background: q[0],
            area1: k * q[1],
            center1: center(q[2]),
            area2: 0.0,
            center2: 0.0,
            gamma_eff: k * q[3],
        },
        FitMode::Double => LorentzianParams {
            background: q[0],
            area1: k * q[1],
            center1: center(q[2]),
            area2: k * q[3],
            center2: center(q[4]),
            gamma_eff: k * q[5],
        },
    };

    let lo = hz_to_angular(spectrum.freqs[0]);
    let hi = hz_to_angular(spectrum.freqs[n - 1]);
    let margin = COVERAGE_HALF_WIDTHS * 0.5 * params.gamma_eff;
    let mut active = vec![(params.area1, params.center1)];
    if mode == FitMode::Double {
        active.push((params.area2, params.center2));
    }
    for &(area, c) in &active {
        if area > 0.0 && (c - margin < lo || c + margin > hi) {
            return Err(FitError::PeakOutsideGrid {
                center_hz: angular_to_hz(c),
                half_width_hz: angular_to_hz(0.5 * params.gamma_eff),
            });
        }
    }
    if mode == FitMode::Double && params.area1 > 0.0 && params.area2 > 0.0 {
        let separation = (params.center2 - params.center1).abs();
        if separation < params.gamma_eff {
            return Err(FitError::OverlappingSidebands {
                separation_hz: angular_to_hz(separation),
                gamma_eff_hz: angular_to_hz(params.gamma_eff),
            });
        }
    }

    let dof = report.dof();
    Ok(LorentzianFitResult {
        mode,
        params,
        covariance: cov,
        fixed,
        residual_norm: report.ssr().sqrt(),
        reduced_chi2: report.ssr() / dof.max(1) as f64,
        dof,
        iterations: report.iterations,
        evaluations: report.evaluations,
        convergence: report.convergence,
        weighting: options.weighting,
    })
}

impl From<LmError> for FitError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::NoConvergence { iterations, .. } => FitError::NoConvergence { iterations },
            other => FitError::InvalidInput(other.to_string()),
        }
    }
}
