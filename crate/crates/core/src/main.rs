use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sideband_core::fitting::{
    fit_coherent_response, fit_lorentzians, CoherentInit, CoherentTrace, FitMode, FitOptions, FitRecord, LmOptions,
    LorentzianFitResult, Weighting,
};
use sideband_core::io::{atomic_write, parse_ledger, parse_summary, render_report, RunConfigFile};
use sideband_core::model::{self, DressedState, DriveConfig, SystemParams};
use sideband_core::spectra;
use sideband_core::sweeps::synthetic::{SyntheticSweepSpec, MAX_BINS};
use sideband_core::sweeps::{run_sweep, theory_curves, write_outputs, DirSource, Regression, SweepConfig, SweepError};
use sideband_core::thermometry::{self, Calibration, NoiseAnchor};
use sideband_core::units::{angular_to_hz, hz_to_angular};
use sideband_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "sideband",
    version,
    about = "Resolved-sideband cooling: model, synthesis, fitting and thermometry"
)]
struct Cli {
    /// Print errors to stderr as a JSON object.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Power,
    Detuning,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Double,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    /// Statistical when the spectrum records its average count.
    Auto,
    Uniform,
    Statistical,
}

#[derive(Subcommand)]
enum Command {
    /// Dressed-state quantities for the configured drive, or a theory table.
    Model {
        #[arg(long)]
        config: PathBuf,
        /// Emit a theory table (CSV) along the configured sweep instead.
        #[arg(long, value_enum)]
        sweep: Option<SweepKind>,
        /// Add the heated occupancy column from the config's heating block.
        #[arg(long)]
        heated: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a heterodyne spectrum from a run config, or a whole
    /// synthetic sweep from a preset.
    Synth {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<SweepKind>,
        /// Single-tone points of a preset sweep.
        #[arg(long, default_value_t = 12)]
        points: usize,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's average count.
        #[arg(long)]
        averages: Option<u64>,
        /// Spectrum CSV (config) or output directory (preset).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a spectrum with Lorentzians or a coherent-response trace.
    Fit {
        #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
        spectrum: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "double")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "auto")]
        weighting: WeightingArg,
        #[arg(long)]
        kappa_hz: Option<f64>,
        #[arg(long)]
        kappa_ex_hz: Option<f64>,
        #[arg(long)]
        delta_c_hz: Option<f64>,
        /// Run config supplying solver tolerances.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occupancy from a fit record: asymmetry for double fits; calibrated or
    /// noise-anchored for single fits.
    Thermo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        /// Calibration JSON (or the output of a two-tone `thermo` call).
        #[arg(long, conflicts_with = "anchor_fit")]
        calibration: Option<PathBuf>,
        /// Single-tone fit record of a thermalized anchor run.
        #[arg(long, requires = "anchor_n_c")]
        anchor_fit: Option<PathBuf>,
        #[arg(long)]
        anchor_n_c: Option<f64>,
        /// Anchor temperature; the system temperature by default.
        #[arg(long)]
        temperature_k: Option<f64>,
        /// Intrinsic damping at the anchor; inferred from the anchor fit by default.
        #[arg(long)]
        gamma_m_hz: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline on a sweep config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Directory that relative run paths resolve against; the config's
        /// directory by default.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a sweep summary as text plus plot-ready CSVs.
    Report {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Directory for report.txt and the CSV tables; text goes to stdout
        /// when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = match e.kind() {
            ErrorKind::InvalidInput => ("invalid-input", 1),
            ErrorKind::Io => ("io", 1),
            ErrorKind::Computation => ("computation", 2),
        };
        Self {
            kind,
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! from_module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
from_module_error!(
    sideband_core::model::ModelError,
    sideband_core::spectra::SpectrumError,
    sideband_core::fitting::FitError,
    sideband_core::thermometry::ThermoError,
    SweepError
);

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        kind: "invalid-input",
        code: 1,
        message: message.into(),
    }
}

fn computation(message: impl Into<String>) -> Failure {
    Failure {
        kind: "computation",
        code: 2,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        kind: "io",
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    atomic_write(path, contents.as_bytes()).map_err(|e| Failure {
        kind: "io",
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn load_config(path: &Path) -> Result<RunConfigFile, Failure> {
    Ok(RunConfigFile::from_json(&read(path)?)?)
}

fn load_record(path: &Path) -> Result<FitRecord, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(format!("{}: malformed fit record: {e}", path.display())))
}

fn load_lorentzian(path: &Path) -> Result<LorentzianFitResult, Failure> {
    Ok(LorentzianFitResult::from_record(&load_record(path)?)?)
}

/// Dressed-state quantities in ordinary-frequency units.
fn dressed_json(params: &SystemParams, s: &DressedState) -> serde_json::Value {
    json!({
        "gamma_b_hz": angular_to_hz(s.gamma_b),
        "gamma_c_hz": angular_to_hz(s.gamma_c),
        "gamma_opt_hz": angular_to_hz(s.gamma_opt),
        "gamma_eff_hz": angular_to_hz(s.gamma_eff),
        "spring_hz": angular_to_hz(s.spring_shift),
        "omega_eff_hz": angular_to_hz(s.omega_eff),
        "n_th": params.n_th,
        "n_f": s.n_f,
        "n_min": s.n_min,
        "beta_dressed": s.beta_dressed,
        "gamma_as_b_hz": angular_to_hz(s.gamma_as_b),
        "gamma_s_c_hz": angular_to_hz(s.gamma_s_c),
        "strong_coupling": s.strong_coupling,
    })
}

fn cmd_model(config: &Path, sweep: Option<SweepKind>, heated: bool, out: Option<&Path>) -> Result<(), Failure> {
    let c = load_config(config)?;
    let params = c.params()?;
    let heating = if heated {
        Some(
            c.heating
                .ok_or_else(|| invalid("--heated needs a heating block in the config"))?,
        )
    } else {
        None
    };
    let text = match sweep {
        None => {
            let drive = c.drive(&params);
            let state = model::dressed_state(&params, &drive)?;
            let mut v = dressed_json(&params, &state);
            if let Some(h) = &heating {
                v["n_f_heated"] = json!(model::occupancy_with_heating(&params, &drive, h)?);
            }
            to_json(&v)
        }
        Some(kind) => {
            let grid = match kind {
                SweepKind::Power => c.power_grid()?,
                SweepKind::Detuning => c.detuning_grid()?,
            };
            theory_curves(&params, &grid, heating.as_ref())?.to_csv()
        }
    };
    emit(out, &text)
}

fn cmd_synth(
    config: Option<&Path>,
    preset: Option<SweepKind>,
    points: usize,
    seed: Option<u64>,
    averages: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    if let Some(kind) = preset {
        let averages = averages.unwrap_or(1_000_000);
        let seed = seed.unwrap_or(0);
        let spec = match kind {
            SweepKind::Power => SyntheticSweepSpec::power_sweep(points, averages, seed),
            SweepKind::Detuning => SyntheticSweepSpec::detuning_sweep(points, averages, seed),
        };
        let path = spec.generate()?.write(out)?;
        eprintln!("wrote {}", path.display());
        return Ok(());
    }
    let c = load_config(config.expect("clap requires --config without --preset"))?;
    let s = c.synthesis.ok_or_else(|| invalid("config has no synthesis block"))?;
    let params = c.params()?;
    let drive = c.drive(&params);
    let n_f = match (s.n_f, &c.heating) {
        (Some(n), _) => n,
        (None, Some(h)) => model::occupancy_with_heating(&params, &drive, h)?,
        (None, None) => model::final_occupancy(&params, &drive)?,
    };
    let grid = spectra::sideband_grid(&params, &drive, s.bins_per_linewidth, s.linewidths_each_side, MAX_BINS)?;
    let clean = spectra::heterodyne_psd(&params, &drive, n_f, s.eta, &grid)?;
    let noisy = spectra::synthesize(
        &clean,
        averages.unwrap_or(s.averages),
        seed.unwrap_or(c.seeds.synthesis),
    )?;
    spectra::write_spectrum(out, &noisy)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    spectrum: Option<&Path>,
    trace: Option<&Path>,
    mode: ModeArg,
    weighting: WeightingArg,
    init: CoherentInit,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let lm = match config {
        Some(p) => load_config(p)?.lm_options(),
        None => LmOptions::default(),
    };
    let record = if let Some(path) = trace {
        let t = CoherentTrace::from_csv(&read(path)?)?;
        fit_coherent_response(&t, &init, &lm)?.to_record()
    } else {
        let s = spectra::read_spectrum(spectrum.expect("clap requires --spectrum without --trace"))?;
        let mode = match mode {
            ModeArg::Single => FitMode::Single,
            ModeArg::Double => FitMode::Double,
        };
        let weighting = match weighting {
            WeightingArg::Uniform => Weighting::Uniform,
            WeightingArg::Statistical => Weighting::Statistical,
            WeightingArg::Auto if s.meta.averages.is_some() => Weighting::Statistical,
            WeightingArg::Auto => Weighting::Uniform,
        };
        let options = FitOptions {
            weighting,
            lm,
            fixed: Vec::new(),
        };
        fit_lorentzians(&s, mode, None, &options)?.to_record()
    };
    emit(out, &to_json(&record))
}

fn load_calibration(path: &Path) -> Result<Calibration, Failure> {
    let v: serde_json::Value =
        serde_json::from_str(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let v = v.get("calibration").cloned().unwrap_or(v);
    serde_json::from_value(v).map_err(|e| invalid(format!("{}: malformed calibration: {e}", path.display())))
}

struct AnchorArgs<'a> {
    fit: &'a Path,
    n_c: f64,
    temperature_k: Option<f64>,
    gamma_m_hz: Option<f64>,
}

fn cmd_thermo(
    config: &Path,
    fit: &Path,
    calibration: Option<&Path>,
    anchor: Option<AnchorArgs>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let c = load_config(config)?;
    let params = c.params()?;
    let drive = c.drive(&params);
    let options = c.thermo_options();
    let fit = load_lorentzian(fit)?;
    let value = match (fit.mode, calibration, anchor) {
        (FitMode::Double, None, None) => {
            let (estimate, calibration) = thermometry::occupancy_from_asymmetry(&fit, &params, &drive, &options)?;
            json!({ "estimate": estimate, "calibration": calibration })
        }
        (FitMode::Single, Some(cal), None) => {
            let cal = load_calibration(cal)?;
            let e = thermometry::occupancy_from_calibration(&fit, &params, &drive, &cal, &options)?;
            json!({ "estimate": e })
        }
        (FitMode::Single, None, Some(a)) => {
            let anchor_fit = load_lorentzian(a.fit)?;
            let anchor_drive = DriveConfig { n_c: a.n_c, ..drive }.single_tone();
            let temperature = a.temperature_k.unwrap_or(c.system.temperature_k);
            let mut anchor = NoiseAnchor::from_fit(&anchor_fit, &params, &anchor_drive, temperature)?;
            if let Some(g) = a.gamma_m_hz {
                anchor.gamma_m = hz_to_angular(g);
                anchor.gamma_m_sigma = 0.0;
            }
            let e = thermometry::occupancy_noise_anchored(&fit, &params, &drive.single_tone(), &anchor, &options)?;
            json!({
                "estimate": e,
                "anchor": {
                    "gamma_m_hz": angular_to_hz(anchor.gamma_m),
                    "gamma_m_sigma_hz": angular_to_hz(anchor.gamma_m_sigma),
                    "gamma_s0_hz": angular_to_hz(anchor.gamma_s0),
                    "temperature_k": anchor.temperature,
                }
            })
        }
        (FitMode::Double, _, _) => return Err(invalid("a double fit takes no --calibration or --anchor-fit")),
        (FitMode::Single, None, None) => {
            return Err(invalid(
                "a single fit needs --calibration or --anchor-fit with --anchor-n-c",
            ))
        }
        (FitMode::Single, Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    emit(out, &to_json(&value))
}

fn cmd_sweep(config: &Path, base: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let c = SweepConfig::from_json(&read(config)?)?;
    let base = match base {
        Some(b) => b.to_path_buf(),
        None => config.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let outcome = run_sweep(&c, &DirSource::new(base))?;
    write_outputs(&outcome, &c.params()?, out)?;
    let s = &outcome.summary;
    eprintln!("{} runs: {} ok, {} failed", s.runs_total, s.runs_ok, s.runs_failed);
    for f in &s.failures {
        eprintln!("run {} failed: {}", f.run_id, f.error);
    }
    let mut failed = Vec::new();
    if let Regression::Failed { error } = &s.heating {
        failed.push(format!("heating regression: {error}"));
    }
    if let Regression::Failed { error } = &s.snr {
        failed.push(format!("detection-efficiency regression: {error}"));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(computation(failed.join("; ")))
    }
}

fn cmd_report(summary: &Path, ledger: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let s = parse_summary(&read(summary)?)?;
    let l = ledger
        .map(|p| read(p).and_then(|t| Ok(parse_ledger(&t)?)))
        .transpose()?;
    let report = render_report(&s, l.as_deref());
    match out {
        None => print!("{}", report.text),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure {
                kind: "io",
                code: 1,
                message: format!("{}: {e}", dir.display()),
            })?;
            write(&dir.join("report.txt"), &report.text)?;
            for (name, csv) in &report.tables {
                write(&dir.join(name), csv)?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Model {
            config,
            sweep,
            heated,
            out,
        } => cmd_model(&config, sweep, heated, out.as_deref()),
        Command::Synth {
            config,
            preset,
            points,
            seed,
            averages,
            out,
        } => cmd_synth(config.as_deref(), preset, points, seed, averages, &out),
        Command::Fit {
            spectrum,
            trace,
            mode,
            weighting,
            kappa_hz,
            kappa_ex_hz,
            delta_c_hz,
            config,
            out,
        } => cmd_fit(
            spectrum.as_deref(),
            trace.as_deref(),
            mode,
            weighting,
            CoherentInit {
                kappa_hz,
                kappa_ex_hz,
                delta_c_hz,
                omit: None,
            },
            config.as_deref(),
            out.as_deref(),
        ),
        Command::Thermo {
            config,
            fit,
            calibration,
            anchor_fit,
            anchor_n_c,
            temperature_k,
            gamma_m_hz,
            out,
        } => {
            let anchor = anchor_fit.as_deref().map(|fit| AnchorArgs {
                fit,
                n_c: anchor_n_c.expect("clap requires --anchor-n-c"),
                temperature_k,
                gamma_m_hz,
            });
            cmd_thermo(&config, &fit, calibration.as_deref(), anchor, out.as_deref())
        }
        Command::Sweep { config, base, out } => cmd_sweep(&config, base.as_deref(), &out),
        Command::Report { summary, ledger, out } => cmd_report(&summary, ledger.as_deref(), out.as_deref()),
    }
}

fn report_failure(f: &Failure, json_errors: bool) {
    if json_errors {
        let v = json!({ "error": { "kind": f.kind, "message": f.message, "exit_code": f.code } });
        eprintln!("{v}");
    } else {
        eprintln!("error: {}", f.message);
    }
}

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) if json_errors => {
            let message = e.to_string();
            eprintln!(
                "{}",
                json!({ "error": { "kind": "usage", "message": message.trim(), "exit_code": 1 } })
            );
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report_failure(&f, json_errors);
            ExitCode::from(f.code)
        }
    }
}
