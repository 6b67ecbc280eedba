use std::time::Instant;

use proptest::prelude::*;
use sideband_core::model::{self, HeatingModel, SystemParams};
use sideband_core::sweeps::synthetic::SyntheticSweepSpec;
use sideband_core::sweeps::{
    run_sweep, single_tone_drive, theory_curves, write_outputs, DirSource, MemorySource, PhotonSource, Regression,
    RunKind, SweepConfig, TheoryGrid,
};
use sideband_core::units::{angular_to_hz, hz_to_angular};

#[test]
fn synthetic_power_sweep_end_to_end() {
    let start = Instant::now();
    let sweep = SyntheticSweepSpec::power_sweep(12, 1_000_000, 0).generate().unwrap();
    let out = run_sweep(&sweep.config, &sweep.source()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(out.summary.runs_failed, 0);
    let single: Vec<_> = out.runs.iter().filter(|r| r.kind == RunKind::SingleTone).collect();
    assert_eq!(single.len(), 12);
    let n_c: Vec<f64> = single.iter().map(|r| r.drive.n_c).collect();
    assert!((n_c[0] - 5.0).abs() < 1e-9 && (n_c[11] - 800.0).abs() < 1e-9);
    let n_f: Vec<f64> = single.iter().map(|r| r.occupancy().unwrap().n_f).collect();
    assert!(n_f.windows(2).all(|w| w[1] < w[0]), "{n_f:?}");
    assert!(out.summary.calibrations.contains_key("power"));
    let anchor = out.summary.anchor.as_ref().unwrap();
    assert!(anchor.gamma_m_inferred);
    assert!((anchor.gamma_m_hz - 115e3).abs() < 5e3);
}

#[test]
fn empty_sweep_attempts_no_regression() {
    let mut config = SyntheticSweepSpec::power_sweep(4, 1000, 0).sweep_config();
    config.runs.clear();
    config.anchor = None;
    let out = run_sweep(&config, &MemorySource::default()).unwrap();
    assert!(out.runs.is_empty());
    let p = config.params().unwrap();
    assert_eq!(out.ledger_jsonl(&p), "");
    assert!(matches!(out.summary.heating, Regression::Skipped { .. }));
    assert!(matches!(out.summary.snr, Regression::Skipped { .. }));
    assert!(out.summary.theory.is_none());
}

#[test]
fn corrupted_spectrum_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SyntheticSweepSpec::power_sweep(5, 1_000_000, 3);
    spec.anchor = None;
    let sweep = spec.generate().unwrap();
    assert_eq!(sweep.config.runs.len(), 10);
    let config_path = sweep.write(dir.path()).unwrap();
    let victim = dir.path().join(&sweep.config.runs[7].spectrum);
    std::fs::write(&victim, "freq_hz,psd_sn\n1.0,garbage\n").unwrap();

    let config = SweepConfig::from_json(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    let out = run_sweep(&config, &DirSource::new(dir.path())).unwrap();
    assert_eq!(out.summary.runs_ok, 9);
    assert_eq!(out.summary.runs_failed, 1);
    assert_eq!(out.summary.failures[0].run_id, sweep.config.runs[7].id);
    let p = config.params().unwrap();
    let ledger = out.ledger_jsonl(&p);
    assert_eq!(ledger.lines().count(), 10);
    assert_eq!(
        ledger.lines().filter(|l| l.contains("\"status\":\"failed\"")).count(),
        1
    );
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let spec = SyntheticSweepSpec::detuning_sweep(8, 1_000_000, 11);
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let sweep = spec.generate().unwrap();
        let config_path = sweep.write(dir.path()).unwrap();
        let config = SweepConfig::from_json(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
        let out = run_sweep(&config, &DirSource::new(dir.path())).unwrap();
        let out_dir = dir.path().join("out");
        write_outputs(&out, &config.params().unwrap(), &out_dir).unwrap();
        let read = |name: &str| std::fs::read(out_dir.join(name)).unwrap();
        files.push([
            read("ledger.jsonl"),
            read("summary.json"),
            read("runs.csv"),
            read("theory.csv"),
        ]);
    }
    assert_eq!(files[0], files[1]);
    assert!(!files[0][0].is_empty());
}

#[test]
fn file_and_memory_sources_agree() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = SyntheticSweepSpec::power_sweep(6, 1_000_000, 5).generate().unwrap();
    sweep.write(dir.path()).unwrap();
    let from_files = run_sweep(&sweep.config, &DirSource::new(dir.path())).unwrap();
    let from_memory = run_sweep(&sweep.config, &sweep.source()).unwrap();
    let p = sweep.config.params().unwrap();
    assert_eq!(from_files.ledger_jsonl(&p), from_memory.ledger_jsonl(&p));
}

#[test]
fn detuning_sweep_minimum_near_red_sideband() {
    // Near-noiseless regime: checks pipeline consistency against the heated
    // model, whose minimum for this device is ≈ 0.08.
    let sweep = SyntheticSweepSpec::detuning_sweep(12, 100_000_000, 0)
        .generate()
        .unwrap();
    let out = run_sweep(&sweep.config, &sweep.source()).unwrap();
    let p = sweep.config.params().unwrap();
    let best = out
        .runs
        .iter()
        .filter(|r| r.kind == RunKind::SingleTone)
        .min_by(|a, b| a.occupancy().unwrap().n_f.total_cmp(&b.occupancy().unwrap().n_f))
        .unwrap();
    let n_f = best.occupancy().unwrap().n_f;
    assert!((angular_to_hz(best.drive.cooling_detuning(&p)) + 5.17e9).abs() < 1.0);
    assert!((n_f - 0.09).abs() / 0.09 < 0.15, "{n_f}");
    assert!((n_f - sweep.truth[&best.id].n_f).abs() / sweep.truth[&best.id].n_f < 0.02);
}

#[test]
fn heating_regression_is_consistent_as_noise_vanishes() {
    let mut errors = Vec::new();
    for averages in [10_000_000_000u64, 10_000_000_000_000_000] {
        let sweep = SyntheticSweepSpec::detuning_sweep(12, averages, 0).generate().unwrap();
        let out = run_sweep(&sweep.config, &sweep.source()).unwrap();
        let h = out.summary.heating.fitted().unwrap();
        errors.push(((h.model.alpha2 / 1.2e-6 - 1.0).abs(), h.unconstrained[0].abs()));
    }
    assert!(errors[0].0 < 0.01, "{errors:?}");
    assert!(errors[1].0 < 1e-5 && errors[1].1 < 1e-7, "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theory_matches_pointwise_model(
        delta_ghz in -8.0f64..-2.0,
        n_c in 1.0f64..2000.0,
        alpha2 in 0.0f64..5e-6,
    ) {
        let p = SystemParams::demo();
        let d = hz_to_angular(delta_ghz * 1e9);
        let h = HeatingModel::new(0.0, alpha2);
        let t = theory_curves(
            &p,
            &TheoryGrid::Detuning { delta_c: vec![d], photons: PhotonSource::Fixed { n_c } },
            Some(&h),
        ).unwrap();
        let drive = single_tone_drive(&p, d, n_c);
        let r = t.rows[0];
        prop_assert_eq!(r.gamma_eff_hz, angular_to_hz(model::effective_damping(&p, &drive)));
        prop_assert_eq!(r.spring_hz, angular_to_hz(model::spring_shift(&p, &drive)));
        prop_assert_eq!(r.n_f, model::final_occupancy(&p, &drive).ok());
        prop_assert_eq!(r.n_f_heated, model::occupancy_with_heating(&p, &drive, &h).ok());
    }
}
