//! Spectrum persistence: `freq_hz,psd_sn` CSV plus a `.meta.json` sidecar.
//!
//! Values are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Spectrum, SpectrumError, SpectrumMeta};
use crate::io::atomic_write;

const HEADER: &str = "freq_hz,psd_sn";

/// Render the CSV body of a spectrum.
pub fn spectrum_to_csv(spectrum: &Spectrum) -> String {
    let mut out = String::with_capacity(48 * (spectrum.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for (f, v) in spectrum.freqs.iter().zip(&spectrum.psd) {
        let _ = writeln!(out, "{f:.16e},{v:.16e}");
    }
    out
}

/// Parse a CSV body; `meta` is supplied separately (normally from the sidecar).
pub fn spectrum_from_csv(text: &str, meta: SpectrumMeta) -> Result<Spectrum, SpectrumError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SpectrumError::Parse("empty file".into()))?;
    if header.trim() != HEADER {
        return Err(SpectrumError::Parse(format!(
            "expected header `{HEADER}`, got `{header}`"
        )));
    }
    let mut freqs = Vec::new();
    let mut psd = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 2;
        let mut cols = line.split(',');
        let (Some(f), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(SpectrumError::Parse(format!("line {row}: expected two columns")));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| SpectrumError::Parse(format!("line {row}: `{s}`: {e}")))
        };
        freqs.push(parse(f)?);
        psd.push(parse(v)?);
    }
    Spectrum::new(freqs, psd, meta)
}

/// `spectrum.csv` → `spectrum.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Write the CSV and its metadata sidecar atomically.
pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<(), SpectrumError> {
    let meta = serde_json::to_string_pretty(&spectrum.meta).map_err(|e| SpectrumError::Io(e.to_string()))?;
    atomic_write(path, spectrum_to_csv(spectrum).as_bytes())
        .map_err(|e| SpectrumError::Io(format!("{}: {e}", path.display())))?;
    let side = sidecar_path(path);
    atomic_write(&side, format!("{meta}\n").as_bytes())
        .map_err(|e| SpectrumError::Io(format!("{}: {e}", side.display())))
}

/// Read a spectrum CSV. Without a sidecar the resolution bandwidth defaults
/// to the bin spacing and the remaining metadata is left empty.
pub fn read_spectrum(path: &Path) -> Result<Spectrum, SpectrumError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpectrumError::Io(format!("{}: {e}", path.display())))?;
    let side = sidecar_path(path);
    let meta = match std::fs::read_to_string(&side) {
        Ok(s) => Some(
            serde_json::from_str::<SpectrumMeta>(&s)
                .map_err(|e| SpectrumError::Parse(format!("{}: {e}", side.display())))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(SpectrumError::Io(format!("{}: {e}", side.display()))),
    };
    match meta {
        Some(meta) => spectrum_from_csv(&text, meta),
        None => {
            let mut s = spectrum_from_csv(&text, SpectrumMeta::plain(0.0))?;
            s.meta.rbw_hz = s.step_hz();
            Ok(s)
        }
    }
}
