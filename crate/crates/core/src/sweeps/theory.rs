//! Theory curves over power and detuning grids, evaluated point by point
//! through the model functions.

use serde::{Deserialize, Serialize};

use crate::model::{self, DriveConfig, HeatingModel, SystemParams};
use crate::units::angular_to_hz;

use super::SweepError;

/// How the cooling-tone photon number follows the detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhotonSource {
    /// Same photon number at every detuning.
    Fixed { n_c: f64 },
    /// Fixed input power; the photon number falls off with detuning.
    FromPower {
        input_power_w: f64,
        efficiency: f64,
        wavelength_m: f64,
    },
}

impl PhotonSource {
    pub fn photons(&self, params: &SystemParams, delta_c: f64) -> f64 {
        match *self {
            Self::Fixed { n_c } => n_c,
            Self::FromPower {
                input_power_w,
                efficiency,
                wavelength_m,
            } => params.intracavity_photons(input_power_w, efficiency, delta_c, wavelength_m),
        }
    }
}

/// Single-tone grid. Detunings are the cooling-tone detuning `Δ_c` (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub enum TheoryGrid {
    Power { n_c: Vec<f64>, delta_c: f64 },
    Detuning { delta_c: Vec<f64>, photons: PhotonSource },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    Power,
    Detuning,
}

/// One grid point, ordinary-frequency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub n_c: f64,
    pub delta_c_hz: f64,
    pub gamma_eff_hz: f64,
    pub spring_hz: f64,
    /// `None` where the drive is dynamically unstable.
    pub n_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_f_heated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryTable {
    pub variable: SweepVariable,
    pub rows: Vec<TheoryRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl TheoryTable {
    /// CSV whose first column is the swept variable (`n_c` or
    /// `delta_c_hz`), followed by `gamma_eff_hz,spring_hz,n_f` and, when a
    /// heating model was supplied, `n_f_heated`.
    pub fn to_csv(&self) -> String {
        let heated = self.rows.iter().any(|r| r.n_f_heated.is_some());
        let first = match self.variable {
            SweepVariable::Power => "n_c",
            SweepVariable::Detuning => "delta_c_hz",
        };
        let mut out = format!("{first},gamma_eff_hz,spring_hz,n_f");
        if heated {
            out.push_str(",n_f_heated");
        }
        out.push('\n');
        for r in &self.rows {
            let x = match self.variable {
                SweepVariable::Power => r.n_c,
                SweepVariable::Detuning => r.delta_c_hz,
            };
            out.push_str(&format!("{x:e},{:e},{:e},{}", r.gamma_eff_hz, r.spring_hz, cell(r.n_f)));
            if heated {
                out.push(',');
                out.push_str(&cell(r.n_f_heated));
            }
            out.push('\n');
        }
        out
    }
}

/// Single-tone drive with the cooling tone at `delta_c`.
pub fn single_tone_drive(params: &SystemParams, delta_c: f64, n_c: f64) -> DriveConfig {
    DriveConfig::from_cooling_detuning(params, delta_c, 0.0, 0.0, n_c, 0.0)
}

fn row(params: &SystemParams, delta_c: f64, n_c: f64, heating: Option<&HeatingModel>) -> Result<TheoryRow, SweepError> {
    let drive = single_tone_drive(params, delta_c, n_c);
    drive.validate()?;
    Ok(TheoryRow {
        n_c,
        delta_c_hz: angular_to_hz(delta_c),
        gamma_eff_hz: angular_to_hz(model::effective_damping(params, &drive)),
        spring_hz: angular_to_hz(model::spring_shift(params, &drive)),
        n_f: model::final_occupancy(params, &drive).ok(),
        n_f_heated: heating.and_then(|h| model::occupancy_with_heating(params, &drive, h).ok()),
    })
}

/// `Γ_eff`, `δΩ_m` and `n̄_f` (optionally with heating) along a grid.
pub fn theory_curves(
    params: &SystemParams,
    grid: &TheoryGrid,
    heating: Option<&HeatingModel>,
) -> Result<TheoryTable, SweepError> {
    params.validate()?;
    let (variable, rows) = match grid {
        TheoryGrid::Power { n_c, delta_c } => (
            SweepVariable::Power,
            n_c.iter()
                .map(|&n| row(params, *delta_c, n, heating))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        TheoryGrid::Detuning { delta_c, photons } => (
            SweepVariable::Detuning,
            delta_c
                .iter()
                .map(|&d| row(params, d, photons.photons(params, d), heating))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    Ok(TheoryTable { variable, rows })
}

/// Theory at explicit `(Δ_c, n̄_c)` points (rad/s, photons), sorted along
/// the swept variable.
pub fn theory_at_points(
    params: &SystemParams,
    variable: SweepVariable,
    points: &[(f64, f64)],
    heating: Option<&HeatingModel>,
) -> Result<TheoryTable, SweepError> {
    params.validate()?;
    let mut rows = points
        .iter()
        .map(|&(d, n)| row(params, d, n, heating))
        .collect::<Result<Vec<_>, _>>()?;
    match variable {
        SweepVariable::Power => rows.sort_by(|a, b| a.n_c.total_cmp(&b.n_c)),
        SweepVariable::Detuning => rows.sort_by(|a, b| a.delta_c_hz.total_cmp(&b.delta_c_hz)),
    }
    Ok(TheoryTable { variable, rows })
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_angular;

    #[test]
    fn power_curve_linewidth_at_776_photons() {
        let p = SystemParams::demo();
        let grid = TheoryGrid::Power {
            n_c: vec![776.0],
            delta_c: -p.omega_m,
        };
        let t = theory_curves(&p, &grid, None).unwrap();
        // Oracle: Γ_m + 4 g₀² n̄_c / κ on the red sideband.
        let oracle = 115e3 + 4.0 * 1.08e6f64.powi(2) * 776.0 / 255e6;
        assert!((t.rows[0].gamma_eff_hz - oracle).abs() / oracle < 1e-3);
        assert!((t.rows[0].gamma_eff_hz - 14.4e6).abs() / 14.4e6 < 0.01);
    }

    #[test]
    fn spring_changes_sign_at_red_sideband() {
        let p = SystemParams::demo();
        let deltas = linspace(hz_to_angular(-7.2e9), hz_to_angular(-3.2e9), 81);
        let grid = TheoryGrid::Detuning {
            delta_c: deltas.clone(),
            photons: PhotonSource::Fixed { n_c: 500.0 },
        };
        let t = theory_curves(&p, &grid, None).unwrap();
        let crossing = t
            .rows
            .windows(2)
            .find(|w| w[0].spring_hz.signum() != w[1].spring_hz.signum())
            .unwrap();
        let step_hz = angular_to_hz(deltas[1] - deltas[0]);
        assert!((crossing[0].delta_c_hz + 5.17e9).abs() <= step_hz);
    }

    #[test]
    fn occupancy_minimum_near_red_sideband() {
        let p = SystemParams::demo();
        let grid = TheoryGrid::Detuning {
            delta_c: linspace(hz_to_angular(-7.2e9), hz_to_angular(-3.2e9), 401),
            photons: PhotonSource::Fixed { n_c: 500.0 },
        };
        let t = theory_curves(&p, &grid, None).unwrap();
        let best = t
            .rows
            .iter()
            .min_by(|a, b| a.n_f.unwrap().total_cmp(&b.n_f.unwrap()))
            .unwrap();
        assert!((best.delta_c_hz + 5.17e9).abs() < 50e6, "{}", best.delta_c_hz);
    }

    #[test]
    fn rows_equal_pointwise_model_calls() {
        let p = SystemParams::demo();
        let h = HeatingModel::new(0.0, 1.2e-6);
        let photons = PhotonSource::FromPower {
            input_power_w: 500e-6,
            efficiency: 0.4,
            wavelength_m: 1.54e-6,
        };
        let deltas = linspace(hz_to_angular(-7e9), hz_to_angular(-3e9), 7);
        let t = theory_curves(
            &p,
            &TheoryGrid::Detuning {
                delta_c: deltas.clone(),
                photons,
            },
            Some(&h),
        )
        .unwrap();
        for (r, &d) in t.rows.iter().zip(&deltas) {
            let n = photons.photons(&p, d);
            let drive = single_tone_drive(&p, d, n);
            assert_eq!(r.n_c, n);
            assert_eq!(r.gamma_eff_hz, angular_to_hz(model::effective_damping(&p, &drive)));
            assert_eq!(
                r.n_f_heated,
                Some(model::occupancy_with_heating(&p, &drive, &h).unwrap())
            );
        }
        let csv = t.to_csv();
        assert!(csv.starts_with("delta_c_hz,gamma_eff_hz,spring_hz,n_f,n_f_heated\n"));
        assert_eq!(csv.lines().count(), 8);
    }
}
