//! Human-readable rendering of a sweep summary, plus plot-ready tables.

use std::fmt::Write as _;

use crate::sweeps::{LedgerEntry, Regression, SweepError, SweepSummary};
use crate::thermometry::OccupancyEstimate;

/// Rendered report: text and named CSV tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub tables: Vec<(String, String)>,
}

pub fn parse_summary(text: &str) -> Result<SweepSummary, SweepError> {
    serde_json::from_str(text).map_err(|e| SweepError::InvalidInput(format!("malformed summary: {e}")))
}

pub fn parse_ledger(text: &str) -> Result<Vec<LedgerEntry>, SweepError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SweepError::InvalidInput(format!("ledger line {}: {e}", i + 1)))
        })
        .collect()
}

fn regression_line<T>(out: &mut String, name: &str, r: &Regression<T>, fitted: impl Fn(&T) -> String) {
    let body = match r {
        Regression::Fitted { result } => fitted(result),
        Regression::Skipped { reason } => format!("skipped ({reason})"),
        Regression::Failed { error } => format!("FAILED: {error}"),
    };
    let _ = writeln!(out, "{name}: {body}");
}

fn estimate_cells(e: Option<&OccupancyEstimate>) -> String {
    match e {
        Some(e) => format!("{:e},{:e},{:e}", e.n_f, e.sigma_lo, e.sigma_hi),
        None => ",,".into(),
    }
}

fn occupancy_table(ledger: &[LedgerEntry]) -> String {
    let mut out = String::from(
        "run_id,kind,n_c,delta_c_hz,\
         n_f_asymmetry,sigma_lo_asymmetry,sigma_hi_asymmetry,\
         n_f_calibrated,sigma_lo_calibrated,sigma_hi_calibrated,\
         n_f_anchored,sigma_lo_anchored,sigma_hi_anchored\n",
    );
    for e in ledger.iter().filter(|e| e.status == "ok") {
        let kind = match e.kind {
            Some(crate::sweeps::RunKind::SingleTone) => "single-tone",
            Some(crate::sweeps::RunKind::TwoTone) => "two-tone",
            None => "",
        };
        let n_c = e.drive.map(|d| format!("{:e}", d.n_c)).unwrap_or_default();
        let delta_c = e.delta_c_hz.map(|d| format!("{d:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{kind},{n_c},{delta_c},{},{},{}",
            e.run_id,
            estimate_cells(e.asymmetry.as_ref()),
            estimate_cells(e.calibrated.as_ref()),
            estimate_cells(e.anchored.as_ref()),
        );
    }
    out
}

/// Text summary plus `theory.csv`, `heating.csv` (fitted excess bath along
/// the theory points) and, with a ledger, `occupancy.csv`.
pub fn render_report(summary: &SweepSummary, ledger: Option<&[LedgerEntry]>) -> Report {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "runs: {} total, {} ok, {} failed",
        summary.runs_total, summary.runs_ok, summary.runs_failed
    );
    for f in &summary.failures {
        let _ = writeln!(text, "  failed {} [{}]: {}", f.run_id, f.session, f.error);
    }
    for (session, c) in &summary.calibrations {
        let _ = writeln!(
            text,
            "calibration [{session}]: C_cal = {:.6e} ± {:.2e} from {} run(s)",
            c.c_cal,
            c.c_cal_sigma,
            c.source_runs.len()
        );
    }
    match (&summary.anchor, &summary.anchor_error) {
        (Some(a), _) => {
            let _ = writeln!(
                text,
                "anchor {} at {} K: Γ_m/2π = {:.4e} ± {:.2e} Hz ({})",
                a.run,
                a.temperature_k,
                a.gamma_m_hz,
                a.gamma_m_sigma_hz,
                if a.gamma_m_inferred { "inferred" } else { "given" }
            );
        }
        (None, Some(e)) => {
            let _ = writeln!(text, "anchor: FAILED: {e}");
        }
        (None, None) => {
            let _ = writeln!(text, "anchor: none");
        }
    }
    regression_line(&mut text, "heating", &summary.heating, |h| {
        let mut s = format!(
            "α₁ = {:.4e} ± {:.2e}, α₂ = {:.4e} ± {:.2e} (χ²_red = {:.3}, {} points)",
            h.model.alpha1, h.model.alpha1_sigma, h.model.alpha2, h.model.alpha2_sigma, h.reduced_chi2, h.points
        );
        if !h.clipped.is_empty() {
            let _ = write!(s, ", clipped to zero: {}", h.clipped.join(", "));
        }
        s
    });
    regression_line(&mut text, "detection efficiency", &summary.snr, |f| {
        format!(
            "η = {:.4e} ± {:.2e} (χ²_red = {:.3}, {} points{})",
            f.model.eta,
            f.model.eta_sigma,
            f.reduced_chi2,
            f.points,
            if f.alpha2_clipped { ", α₂ clipped" } else { "" }
        )
    });

    let mut tables = Vec::new();
    if let Some(t) = &summary.theory {
        tables.push(("theory.csv".to_string(), t.to_csv()));
        if let Some(h) = summary.heating.fitted() {
            let mut csv = String::from("n_c,excess_occupancy\n");
            let mut n_c: Vec<f64> = t.rows.iter().map(|r| r.n_c).collect();
            n_c.sort_by(f64::total_cmp);
            n_c.dedup();
            for n in n_c {
                let _ = writeln!(csv, "{n:e},{:e}", h.model.excess_occupancy(n));
            }
            tables.push(("heating.csv".to_string(), csv));
        }
    }
    if let Some(ledger) = ledger {
        tables.push(("occupancy.csv".to_string(), occupancy_table(ledger)));
    }
    Report { text, tables }
}
