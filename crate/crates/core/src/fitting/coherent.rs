//! Coherent cavity-response fits.
//!
//! The adopted lineshape is the weak-probe reflection of a one-port cavity
//! with a single red-detuned pump,
//!
//! `r(Ω) = 1 − κ_ex / (κ/2 − i(Δ_c + Ω) + g² / (Γ_m/2 − i(Ω − Ω_m)))`,
//!
//! where `Ω` is the probe offset from the pump, `Δ_c` the pump detuning from
//! the cavity and `g = g₀√n̄_c`. The bare cavity dip sits at `Ω = −Δ_c` and
//! the transparency window at `Ω = Ω_m`. Magnitude-only traces cannot tell
//! `κ_ex` from `κ − κ_ex`; the automatic initial guess takes the
//! undercoupled branch `κ_ex < κ/2`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lm::{self, Convergence, LeastSquares, LmOptions, LmReport};
use super::{FitDiagnostics, FitError, FitRecord};
use crate::units::{angular_to_hz, hz_to_angular};

/// Systematic floor on the reported detuning uncertainty, Hz.
pub const DETUNING_SIGMA_FLOOR_HZ: f64 = 10e6;
/// A coupling below this many standard errors is treated as absent.
const COUPLING_SIGNIFICANCE: f64 = 2.0;
/// Parameters are solved in MHz (ordinary frequency) for conditioning.
const UNIT: f64 = TAU * 1e6;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Lineshape parameters in angular units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmitParams {
    pub kappa: f64,
    pub kappa_ex: f64,
    pub delta_c: f64,
    pub g: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
}

/// Reflection coefficient at probe offset `omega` (rad/s).
pub fn omit_reflection(p: &OmitParams, omega: f64) -> Complex64 {
    let mech = if p.g == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        p.g * p.g / Complex64::new(0.5 * p.gamma_m, -(omega - p.omega_m))
    };
    1.0 - p.kappa_ex / (Complex64::new(0.5 * p.kappa, 0.0) - I * (p.delta_c + omega) + mech)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceData {
    Complex(Vec<Complex64>),
    Magnitude(Vec<f64>),
}

/// Coherent response versus signed probe offset from the pump.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentTrace {
    pub probe_offsets_hz: Vec<f64>,
    pub data: TraceData,
}

impl CoherentTrace {
    /// CSV with header `probe_offset_hz,re,im` (complex) or
    /// `probe_offset_hz,magnitude`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.data {
            TraceData::Complex(z) => {
                out.push_str("probe_offset_hz,re,im\n");
                for (f, v) in self.probe_offsets_hz.iter().zip(z) {
                    out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", f, v.re, v.im));
                }
            }
            TraceData::Magnitude(m) => {
                out.push_str("probe_offset_hz,magnitude\n");
                for (f, v) in self.probe_offsets_hz.iter().zip(m) {
                    out.push_str(&format!("{:.16e},{:.16e}\n", f, v));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, FitError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| FitError::InvalidInput("empty trace file".into()))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        let complex = match columns.as_slice() {
            ["probe_offset_hz", "re", "im"] => true,
            ["probe_offset_hz", "magnitude"] => false,
            _ => return Err(FitError::InvalidInput(format!("unrecognized trace header {header:?}"))),
        };
        let mut offsets = Vec::new();
        let mut z = Vec::new();
        let mut m = Vec::new();
        for (i, line) in lines.enumerate() {
            let values = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| FitError::InvalidInput(format!("trace line {}: {e}", i + 2)))?;
            if values.len() != columns.len() || values.iter().any(|v| !v.is_finite()) {
                return Err(FitError::InvalidInput(format!("trace line {}: malformed row", i + 2)));
            }
            offsets.push(values[0]);
            if complex {
                z.push(Complex64::new(values[1], values[2]));
            } else {
                m.push(values[1]);
            }
        }
        let trace = Self {
            probe_offsets_hz: offsets,
            data: if complex {
                TraceData::Complex(z)
            } else {
                TraceData::Magnitude(m)
            },
        };
        trace.validate()?;
        Ok(trace)
    }

    /// Noiseless trace from the adopted lineshape.
    pub fn synthesize(p: &OmitParams, probe_offsets_hz: &[f64], magnitude_only: bool) -> Self {
        let r: Vec<Complex64> = probe_offsets_hz
            .iter()
            .map(|&f| omit_reflection(p, hz_to_angular(f)))
            .collect();
        let data = if magnitude_only {
            TraceData::Magnitude(r.iter().map(|z| z.norm()).collect())
        } else {
            TraceData::Complex(r)
        };
        Self {
            probe_offsets_hz: probe_offsets_hz.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.probe_offsets_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probe_offsets_hz.is_empty()
    }

    fn magnitudes(&self) -> Vec<f64> {
        match &self.data {
            TraceData::Complex(z) => z.iter().map(|v| v.norm()).collect(),
            TraceData::Magnitude(m) => m.clone(),
        }
    }

    fn validate(&self) -> Result<(), FitError> {
        let n = match &self.data {
            TraceData::Complex(z) => z.len(),
            TraceData::Magnitude(m) => m.len(),
        };
        if n != self.len() {
            return Err(FitError::InvalidInput(format!(
                "{} offsets but {} samples",
                self.len(),
                n
            )));
        }
        if n < 8 {
            return Err(FitError::InvalidInput("trace needs at least 8 samples".into()));
        }
        if !self.probe_offsets_hz.windows(2).all(|w| w[1] > w[0]) {
            return Err(FitError::InvalidInput("probe offsets must increase".into()));
        }
        Ok(())
    }
}

/// Transparency-window starting values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmitInit {
    pub g_hz: f64,
    pub omega_m_hz: f64,
    /// Held fixed during the fit.
    pub gamma_m_hz: f64,
}

/// Starting values; anything left `None` is estimated from the dip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentInit {
    pub kappa_hz: Option<f64>,
    pub kappa_ex_hz: Option<f64>,
    pub delta_c_hz: Option<f64>,
    /// Without it only the bare cavity dip is fitted.
    pub omit: Option<OmitInit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherentResponseFit {
    pub kappa: f64,
    pub kappa_ex: f64,
    pub delta_c: f64,
    /// `(g, Ω_m)` when a significant transparency window was resolved.
    pub omit: Option<(f64, f64)>,
    pub kappa_sigma: f64,
    pub kappa_ex_sigma: f64,
    /// Statistical detuning error, before the systematic floor.
    pub delta_c_sigma_stat: f64,
    /// Reported detuning error, never below the systematic floor.
    pub delta_c_sigma: f64,
    pub omit_sigma: Option<(f64, f64)>,
    /// Γ_m used (held fixed) in the window model.
    pub gamma_m: f64,
    /// Covariance over `[κ, κ_ex, Δ_c(, g, Ω_m)]`, angular units, statistical only.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub convergence: Convergence,
    /// Set when a window fit was attempted but the coupling was not significant.
    pub fell_back_to_bare: bool,
}

impl CoherentResponseFit {
    pub fn params(&self) -> OmitParams {
        let (g, omega_m) = self.omit.unwrap_or((0.0, 0.0));
        OmitParams {
            kappa: self.kappa,
            kappa_ex: self.kappa_ex,
            delta_c: self.delta_c,
            g,
            omega_m,
            gamma_m: self.gamma_m,
        }
    }

    pub fn to_record(&self) -> FitRecord {
        let mut names = vec!["kappa_hz", "kappa_ex_hz", "delta_c_hz"];
        let mut values = vec![self.kappa, self.kappa_ex, self.delta_c];
        let mut sigmas = vec![self.kappa_sigma, self.kappa_ex_sigma, self.delta_c_sigma];
        if let (Some((g, wm)), Some((gs, wms))) = (self.omit, self.omit_sigma) {
            names.extend(["g_hz", "omega_m_hz"]);
            values.extend([g, wm]);
            sigmas.extend([gs, wms]);
        }
        let n = names.len();
        let mut flags = Vec::new();
        if self.fell_back_to_bare {
            flags.push("coupling-not-significant".to_string());
        }
        if self.delta_c_sigma > self.delta_c_sigma_stat {
            flags.push("detuning-sigma-floor".to_string());
        }
        FitRecord {
            kind: "coherent-response".into(),
            names: names.into_iter().map(String::from).collect(),
            values: values.into_iter().map(angular_to_hz).collect(),
            sigmas: sigmas.into_iter().map(angular_to_hz).collect(),
            covariance: (0..n * n)
                .map(|k| self.covariance[(k / n, k % n)] / (TAU * TAU))
                .collect(),
            fixed: vec!["gamma_m_hz".into()],
            diagnostics: FitDiagnostics {
                iterations: self.iterations,
                evaluations: self.evaluations,
                convergence: self.convergence,
                residual_norm: self.residual_norm,
                reduced_chi2: self.reduced_chi2,
                dof: self.dof,
                weighting: None,
                flags,
            },
        }
    }
}

/// Scaled parameter vector `[κ, κ_ex, Δ_c, g, Ω_m]` in MHz.
struct Problem<'a> {
    trace: &'a CoherentTrace,
    omega: Vec<f64>,
    gamma_m: f64,
    with_window: bool,
}

impl Problem<'_> {
    fn params(&self, q: &[f64]) -> OmitParams {
        OmitParams {
            kappa: q[0] * UNIT,
            kappa_ex: q[1] * UNIT,
            delta_c: q[2] * UNIT,
            g: if self.with_window { q[3] * UNIT } else { 0.0 },
            omega_m: if self.with_window { q[4] * UNIT } else { 0.0 },
            gamma_m: self.gamma_m,
        }
    }
}

impl LeastSquares for Problem<'_> {
    fn n_params(&self) -> usize {
        if self.with_window {
            5
        } else {
            3
        }
    }

    fn n_residuals(&self) -> usize {
        match &self.trace.data {
            TraceData::Complex(z) => 2 * z.len(),
            TraceData::Magnitude(m) => m.len(),
        }
    }

    fn residuals(&self, q: &[f64], out: &mut [f64]) {
        let p = self.params(q);
        match &self.trace.data {
            TraceData::Complex(z) => {
                let n = z.len();
                for (i, (&w, d)) in self.omega.iter().zip(z).enumerate() {
                    let r = omit_reflection(&p, w) - d;
                    out[i] = r.re;
                    out[n + i] = r.im;
                }
            }
            TraceData::Magnitude(m) => {
                for (i, (&w, d)) in self.omega.iter().zip(m).enumerate() {
                    out[i] = omit_reflection(&p, w).norm() - d;
                }
            }
        }
    }

    fn feasible(&self, q: &[f64]) -> bool {
        let base = q[0] > 0.0 && q[1] > 0.0 && q[1] <= q[0];
        base && (!self.with_window || (q[3] >= 0.0 && q[4] > 0.0))
    }
}

/// Dip-based starting values `[κ, κ_ex, Δ_c]` in MHz.
fn auto_init(trace: &CoherentTrace) -> [f64; 3] {
    let mag = trace.magnitudes();
    let f = &trace.probe_offsets_hz;
    let depth: Vec<f64> = mag.iter().map(|m| 1.0 - m * m).collect();
    let imin = (0..mag.len()).min_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(0);
    let half = 0.5 * depth[imin];
    let left = (0..mag.len()).find(|&i| depth[i] >= half).unwrap_or(0);
    let right = (0..mag.len())
        .rev()
        .find(|&i| depth[i] >= half)
        .unwrap_or(mag.len() - 1);
    let width_hz = (f[right] - f[left]).max(f[1] - f[0]);
    let center_hz = 0.5 * (f[left] + f[right]);
    let kappa = width_hz / 1e6;
    let kappa_ex = (0.5 * kappa * (1.0 - mag[imin].min(1.0))).max(1e-3 * kappa);
    [kappa, kappa_ex, -center_hz / 1e6]
}

struct Solved {
    report: LmReport,
    cov: DMatrix<f64>,
}

fn solve(problem: &Problem, start: &[f64], free: &[bool], options: &LmOptions) -> Result<Solved, FitError> {
    let report = lm::minimize_masked(problem, start, free, options)?;
    let cov = report.covariance();
    Ok(Solved { report, cov })
}

/// Fit κ, κ_ex and Δ_c (and the transparency window when `init.omit` is
/// given) to a coherent response trace.
///
/// The reported detuning uncertainty never drops below
/// [`DETUNING_SIGMA_FLOOR_HZ`]. If the mirrored detuning `−Δ_c` describes
/// the trace equally well (Δχ² < 1), the sign is not guessed:
/// [`FitError::AmbiguousDetuningSign`] is returned.
pub fn fit_coherent_response(
    trace: &CoherentTrace,
    init: &CoherentInit,
    options: &LmOptions,
) -> Result<CoherentResponseFit, FitError> {
    trace.validate()?;
    let guess = auto_init(trace);
    let start = [
        init.kappa_hz.map_or(guess[0], |v| v / 1e6),
        init.kappa_ex_hz.map_or(guess[1], |v| v / 1e6),
        init.delta_c_hz.map_or(guess[2], |v| v / 1e6),
    ];
    let omega: Vec<f64> = trace.probe_offsets_hz.iter().map(|&f| hz_to_angular(f)).collect();
    let gamma_m = init.omit.map_or(0.0, |o| hz_to_angular(o.gamma_m_hz));
    let bare_problem = Problem {
        trace,
        omega: omega.clone(),
        gamma_m,
        with_window: false,
    };
    let bare = solve(&bare_problem, &start, &[true; 3], options)?;

    let mut fell_back = false;
    let (problem, solved) = match init.omit {
        Some(o) => {
            let full_problem = Problem {
                trace,
                omega,
                gamma_m,
                with_window: true,
            };
            let mut q = bare.report.params.clone();
            q.extend([o.g_hz / 1e6, o.omega_m_hz / 1e6]);
            match solve(&full_problem, &q, &[true; 5], options) {
                Ok(full) => {
                    let g = full.report.params[3];
                    let g_sigma = full.cov[(3, 3)].max(0.0).sqrt();
                    // The window must also lower the cost beyond what two
                    // extra parameters buy on noise alone.
                    let s2 = full.report.ssr() / full.report.dof().max(1) as f64;
                    let noise_floor = 1e-24 * full_problem.n_residuals() as f64;
                    let gain = 2.0 * (bare.report.cost - full.report.cost);
                    if g > COUPLING_SIGNIFICANCE * g_sigma && gain > (2.0 * s2).max(noise_floor) {
                        (full_problem, full)
                    } else {
                        fell_back = true;
                        (bare_problem, bare)
                    }
                }
                Err(FitError::NoConvergence { .. }) => {
                    fell_back = true;
                    (bare_problem, bare)
                }
                Err(e) => return Err(e),
            }
        }
        None => (bare_problem, bare),
    };

    let q = &solved.report.params;
    let cost = solved.report.cost;
    let dof = solved.report.dof().max(1);
    let s2 = 2.0 * cost / dof as f64;
    let delta_c_sigma_stat = solved.cov[(2, 2)].max(0.0).sqrt() * UNIT;

    if angular_to_hz((q[2] * UNIT).abs()) > DETUNING_SIGMA_FLOOR_HZ {
        let mut mirrored = q.clone();
        mirrored[2] = -q[2];
        let mut free = vec![true; q.len()];
        free[2] = false;
        let mirror_cost = lm::minimize_masked(&problem, &mirrored, &free, options)
            .map(|r| r.cost)
            .unwrap_or(f64::INFINITY);
        let noise_floor = 1e-24 * problem.n_residuals() as f64;
        if 2.0 * (mirror_cost - cost) <= s2.max(noise_floor) {
            return Err(FitError::AmbiguousDetuningSign {
                delta_c_hz: angular_to_hz((q[2] * UNIT).abs()),
            });
        }
    }

    let np = q.len();
    let covariance = DMatrix::from_fn(np, np, |i, j| solved.cov[(i, j)] * UNIT * UNIT);
    let sigma = |i: usize| covariance[(i, i)].max(0.0).sqrt();
    let with_window = problem.with_window;
    Ok(CoherentResponseFit {
        kappa: q[0] * UNIT,
        kappa_ex: q[1] * UNIT,
        delta_c: q[2] * UNIT,
        omit: with_window.then(|| (q[3] * UNIT, q[4] * UNIT)),
        kappa_sigma: sigma(0),
        kappa_ex_sigma: sigma(1),
        delta_c_sigma_stat,
        delta_c_sigma: delta_c_sigma_stat.max(hz_to_angular(DETUNING_SIGMA_FLOOR_HZ)),
        omit_sigma: with_window.then(|| (sigma(3), sigma(4))),
        gamma_m,
        covariance,
        residual_norm: solved.report.ssr().sqrt(),
        reduced_chi2: s2,
        dof,
        iterations: solved.report.iterations,
        evaluations: solved.report.evaluations,
        convergence: solved.report.convergence,
        fell_back_to_bare: fell_back,
    })
}
