//! Acceptance suite. Each test prints one `PASS`/`FAIL` line before
//! asserting, so `cargo test --test acceptance -- --nocapture` gives a
//! readable report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sideband_core::fitting::{fit_lorentzians, FitMode, FitOptions};
use sideband_core::model::{self, exact_effective_susceptibility, DriveConfig, HeatingModel, SystemParams};
use sideband_core::spectra::{
    displacement_psd, heterodyne_psd, read_spectrum, sideband_grid, spectrum_from_csv, spectrum_to_csv, synthesize,
    write_spectrum, Spectrum,
};
use sideband_core::sweeps::synthetic::SyntheticSweepSpec;
use sideband_core::sweeps::{run_sweep, snr_theory, RunKind, SweepOutcome};
use sideband_core::thermometry::{
    infer_gamma_m_from_rates, occupancy_from_asymmetry, OccupancyEstimate, ThermoOptions,
};
use sideband_core::units::{angular_to_hz, hz_to_angular};

fn report(id: u32, name: &str, ok: bool, detail: String) {
    println!("{} [{id:>2}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn c01_scattering_rate_arithmetic() {
    let p = SystemParams::demo();
    let delta = hz_to_angular(-100e6);
    // Δ − δ = 0 puts the cooling tone on the red sideband.
    let d = DriveConfig::from_cooling_detuning(&p, -p.omega_m, delta, hz_to_angular(300e6), 5.0, 0.0);
    assert_eq!(d.delta_mean - d.delta, 0.0);
    let gamma_c = model::scattering_rates(&p, &d).gamma_c;
    let oracle = 4.0 * p.g0 * p.g0 * 5.0 / p.kappa;
    let got_hz = angular_to_hz(gamma_c);
    let ok = rel(gamma_c, oracle) < 1e-12 && rel(got_hz, 93e3) < 0.03;
    report(
        1,
        "scattering-rate arithmetic",
        ok,
        format!(
            "Γ_c/2π = {:.1} Hz vs 93 kHz ({:+.2}%)",
            got_hz,
            100.0 * (got_hz / 93e3 - 1.0)
        ),
    );
}

#[test]
fn c02_heating_contribution() {
    let h = HeatingModel::new(0.0, 1.2e-6);
    let got = h.excess_occupancy(330.0);
    let oracle = 1.2e-6 * 330.0 * 330.0;
    let ok = (got - oracle).abs() < 1e-15 && (0.125..=0.140).contains(&got);
    report(
        2,
        "quadratic heating at n_c = 330",
        ok,
        format!("{got:.5} phonons (window [0.125, 0.140])"),
    );
}

#[test]
fn c03_resolved_sideband_limit() {
    let mut p = SystemParams::demo();
    let ratio_ex = p.kappa_ex / p.kappa;
    p.kappa = p.omega_m / 20.0;
    p.kappa_ex = ratio_ex * p.kappa;
    p.kappa_0 = p.kappa - p.kappa_ex;
    p.validate().unwrap();
    let d = DriveConfig::from_cooling_detuning(&p, -p.omega_m, 0.0, 0.0, 200.0, 0.0);
    let n_min = model::min_occupancy(&p, &d).unwrap();

    // Detailed balance between anti-Stokes (cavity resonant) and Stokes
    // (2Ω_m off resonance) scattering of the single tone.
    let lorentz = |x: f64| p.kappa / (0.25 * p.kappa * p.kappa + x * x);
    let (a_minus, a_plus) = (lorentz(0.0), lorentz(2.0 * p.omega_m));
    let oracle = a_plus / (a_minus - a_plus);
    let limit = (p.kappa / (4.0 * p.omega_m)).powi(2);
    let ok = rel(n_min, oracle) < 1e-9 && rel(n_min, limit) < 0.02;
    report(
        3,
        "resolved-sideband quantum limit",
        ok,
        format!(
            "n_min = {n_min:.6e}, (κ/4Ω_m)² = {limit:.6e} ({:+.3}%)",
            100.0 * (n_min / limit - 1.0)
        ),
    );
}

#[test]
fn c04_dressed_zpf_identity() {
    let p = SystemParams::demo();
    assert_eq!((p.alpha_opt, p.beta_mech), (1.0, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0f64;
    let mut drawn = 0;
    while drawn < 1000 {
        let n_c = rng.random_range(0.0..5000.0);
        let n_b = rng.random_range(0.0..2000.0);
        let delta_c = p.omega_m * rng.random_range(-1.6..-0.4);
        let delta = hz_to_angular(rng.random_range(-300e6..-1e6));
        let d = DriveConfig::from_cooling_detuning(&p, delta_c, delta, hz_to_angular(500e6), n_c, n_b);
        let Ok(beta) = model::dressed_zpf(&p, &d) else {
            continue;
        };
        drawn += 1;
        worst = worst.max((beta - 1.0).abs());
    }
    report(
        4,
        "dressed zpf identity",
        worst <= 1e-12,
        format!("max |β̃ − 1| = {worst:.2e} over 1000 drives"),
    );
}

/// Peak position and full width at half maximum of `|χ_meff|²` near `guess`.
fn exact_peak(p: &SystemParams, d: &DriveConfig, guess: f64, width: f64) -> (f64, f64) {
    let f = |w: f64| {
        exact_effective_susceptibility(p, d, w)
            .chi_meff
            .value()
            .unwrap()
            .norm_sqr()
    };
    let (lo, hi) = (guess - 5.0 * width, guess + 5.0 * width);
    let n = 20_001;
    let step = (hi - lo) / (n - 1) as f64;
    let coarse = (0..n)
        .map(|i| lo + step * i as f64)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = (coarse - step, coarse + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if f(c) > f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    let peak = 0.5 * (a + b);
    let half = 0.5 * f(peak);
    let crossing = |mut inside: f64, mut outside: f64| {
        for _ in 0..200 {
            let m = 0.5 * (inside + outside);
            if f(m) > half {
                inside = m;
            } else {
                outside = m;
            }
        }
        0.5 * (inside + outside)
    };
    let fwhm = crossing(peak, peak + 20.0 * width) - crossing(peak, peak - 20.0 * width);
    (peak, fwhm)
}

#[test]
fn c05_exact_vs_lorentzian_susceptibility() {
    let p = SystemParams::demo();
    let cases = [
        (0.0, 5.0, 0.0),
        (0.25, 10.0, 0.0),
        (0.5, 10.0, 0.0),
        (-0.5, 10.0, 0.0),
        (0.5, 10.0, 8.0),
    ];
    let mut worst_shift = 0f64;
    let mut worst_width = 0f64;
    let mut regime = true;
    for (offset, n_c, n_b) in cases {
        let d = DriveConfig::from_cooling_detuning(
            &p,
            -p.omega_m + offset * p.kappa,
            hz_to_angular(-20e6),
            hz_to_angular(60e6),
            n_c,
            n_b,
        );
        let s = model::dressed_state(&p, &d).unwrap();
        regime &= s.gamma_opt.abs() / p.kappa <= 1e-3;
        let (peak, fwhm) = exact_peak(&p, &d, -d.delta + s.spring_shift, s.gamma_eff);
        // Mechanical resonance sits at −δ in the frame of the tone pair.
        let shift = peak + d.delta;
        let scale = if s.spring_shift != 0.0 {
            s.spring_shift.abs()
        } else {
            s.gamma_eff
        };
        worst_shift = worst_shift.max((shift - s.spring_shift).abs() / scale);
        worst_width = worst_width.max(rel(fwhm, s.gamma_eff));
    }
    let ok = regime && worst_shift < 0.01 && worst_width < 0.01;
    report(
        5,
        "exact vs Lorentzian susceptibility",
        ok,
        format!(
            "worst spring-shift error {:.3}%, worst FWHM error {:.3}% over {} drives",
            100.0 * worst_shift,
            100.0 * worst_width,
            cases.len()
        ),
    );
}

struct RoundTrip {
    params: SystemParams,
    drive: DriveConfig,
}

impl RoundTrip {
    fn new() -> Self {
        let params = SystemParams::demo();
        let drive = DriveConfig::from_cooling_detuning(
            &params,
            -params.omega_m,
            hz_to_angular(-20e6),
            hz_to_angular(60e6),
            300.0,
            60.0,
        );
        Self { params, drive }
    }

    fn clean(&self, n_f: f64, eta: f64) -> Spectrum {
        let grid = sideband_grid(&self.params, &self.drive, 50.0, 10.0, 20_000).unwrap();
        heterodyne_psd(&self.params, &self.drive, n_f, eta, &grid).unwrap()
    }

    fn estimate(&self, spectrum: &Spectrum) -> Option<OccupancyEstimate> {
        let fit = fit_lorentzians(spectrum, FitMode::Double, None, &FitOptions::statistical()).ok()?;
        occupancy_from_asymmetry(&fit, &self.params, &self.drive, &ThermoOptions::default())
            .ok()
            .map(|e| e.0)
    }
}

#[test]
fn c06_round_trip_thermometry() {
    let rt = RoundTrip::new();
    let mut worst = 0f64;
    for n_f in [0.1, 0.3, 1.0, 3.0] {
        let clean = rt.clean(n_f, 1.0);
        for seed in 0..20 {
            let err = match rt.estimate(&synthesize(&clean, 10_000, seed).unwrap()) {
                Some(e) => rel(e.n_f, n_f),
                None => f64::INFINITY,
            };
            worst = worst.max(err);
        }
    }

    // Cooling sideband 5× above the shot-noise floor, 200 averages.
    let n_f = 3.0;
    let rates = model::scattering_rates(&rt.params, &rt.drive);
    let gamma_eff = rt.params.gamma_m + rates.gamma_opt();
    let eta = 5.0 * gamma_eff / (4.0 * n_f * rates.gamma_c);
    let clean = rt.clean(n_f, eta);
    let covered = (0..100)
        .filter(|&seed| {
            rt.estimate(&synthesize(&clean, 200, seed).unwrap())
                .is_some_and(|e| e.covers(n_f, 2.0))
        })
        .count();

    let ok = worst < 0.02 && covered >= 95;
    report(
        6,
        "round-trip thermometry",
        ok,
        format!(
            "1e4 averages: worst error {:.2}% over 4 × 20 seeds; SNR 5 (η = {eta:.3}): {covered}/100 within 2σ",
            100.0 * worst
        ),
    );
}

fn detuning_sweep(seed: u64) -> (SweepOutcome, SystemParams) {
    let sweep = SyntheticSweepSpec::detuning_sweep(12, 1_000_000, seed)
        .generate()
        .unwrap();
    let out = run_sweep(&sweep.config, &sweep.source()).unwrap();
    (out, sweep.config.params().unwrap())
}

fn heating_recovered(out: &SweepOutcome) -> Option<(f64, f64, f64)> {
    let h = out.summary.heating.fitted()?;
    let a2_err = rel(h.model.alpha2, 1.2e-6);
    let a1 = h.unconstrained[0];
    Some((a2_err, a1, h.model.alpha1_sigma))
}

#[test]
fn c07_heating_regression_recovery() {
    let (out, _) = detuning_sweep(0);
    let (a2_err, a1, a1_sigma) = heating_recovered(&out).expect("heating regression fitted");
    let ok = a2_err < 0.10 && a1.abs() <= 2.0 * a1_sigma;
    let seeds = 1..20u64;
    let passing = seeds
        .clone()
        .filter(|&s| {
            heating_recovered(&detuning_sweep(s).0).is_some_and(|(e, a1, sd)| e < 0.10 && a1.abs() <= 2.0 * sd)
        })
        .count();
    report(
        7,
        "heating regression recovery",
        ok,
        format!(
            "seed 0: α₂ error {:.2}%, α₁ = {a1:.2e} ± {a1_sigma:.2e}; seeds 1-19 meeting both: {passing}/{}",
            100.0 * a2_err,
            seeds.count()
        ),
    );
}

#[test]
fn c08_detection_efficiency() {
    let (out, p) = detuning_sweep(0);
    let eta = out.summary.snr.fitted().expect("SNR regression fitted").model.eta;
    let eta_err = rel(eta, 0.064);

    let n_c = 2000.0;
    let d = DriveConfig::from_cooling_detuning(&p, -p.omega_m, 0.0, 0.0, n_c, 0.0);
    let n_f = model::final_occupancy(&p, &d).unwrap();
    let snr = snr_theory(&p, n_c, -p.omega_m, 0.064, &HeatingModel::default());
    let sat_err = rel(snr, 4.0 * 0.064 * n_f);

    let ok = eta_err < 0.05 && sat_err < 0.01;
    report(
        8,
        "detection-efficiency regression",
        ok,
        format!(
            "η = {eta:.5} ({:+.2}%); SNR / 4ηn_f at n_c C₀ = {:.0}: {:.5}",
            100.0 * (eta / 0.064 - 1.0),
            n_c * p.vacuum_cooperativity(),
            snr / (4.0 * 0.064 * n_f)
        ),
    );
}

#[test]
fn c09_gamma_m_inference() {
    let est = infer_gamma_m_from_rates(hz_to_angular(453e3), 0.0, hz_to_angular(93e3));
    let got = angular_to_hz(est.gamma_m);
    let ok = rel(got, 360e3) < 1e-9 && !est.nonphysical;
    report(9, "Γ_m inference", ok, format!("Γ_m/2π = {got:.6} Hz"));
}

/// Points where the calibrated and noise-anchored occupancies disagree by
/// more than their combined one-sided uncertainties.
fn disagreements(out: &SweepOutcome) -> (usize, usize) {
    let mut compared = 0;
    let mut bad = 0;
    for run in out.runs.iter().filter(|r| r.kind == RunKind::SingleTone) {
        let (Some(c), Some(a)) = (&run.calibrated, &run.anchored) else {
            continue;
        };
        compared += 1;
        let (sc, sa) = if c.n_f > a.n_f {
            (c.sigma_lo, a.sigma_hi)
        } else {
            (c.sigma_hi, a.sigma_lo)
        };
        if (c.n_f - a.n_f).abs() > (sc * sc + sa * sa).sqrt() {
            bad += 1;
        }
    }
    (compared, bad)
}

#[test]
fn c10_anchored_vs_calibrated() {
    let power = |seed| {
        let sweep = SyntheticSweepSpec::power_sweep(12, 1_000_000, seed).generate().unwrap();
        run_sweep(&sweep.config, &sweep.source()).unwrap()
    };
    let (compared, bad) = disagreements(&power(0));
    let ok = compared == 12 && bad == 0;
    let seeds = 1..20u64;
    let clean = seeds.clone().filter(|&s| disagreements(&power(s)).1 == 0).count();
    report(
        10,
        "anchored vs calibrated thermometry",
        ok,
        format!(
            "seed 0: {}/{compared} points agree within combined 1σ; seeds 1-19 agreeing everywhere: {clean}/{}",
            compared - bad,
            seeds.count()
        ),
    );
}

/// Composite Simpson over a uniform grid with an odd number of points.
fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    assert!(n % 2 == 1);
    let inner: f64 = y[1..n - 1]
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    h / 3.0 * (y[0] + inner + y[n - 1])
}

#[test]
fn c11_displacement_normalization() {
    let p = SystemParams::demo();
    let drives = [
        DriveConfig::from_cooling_detuning(&p, -p.omega_m, hz_to_angular(-20e6), hz_to_angular(60e6), 300.0, 60.0),
        DriveConfig::from_cooling_detuning(&p, -p.omega_m, 0.0, 0.0, 50.0, 0.0),
        DriveConfig::from_cooling_detuning(
            &p,
            -p.omega_m + 0.3 * p.kappa,
            hz_to_angular(-100e6),
            hz_to_angular(300e6),
            800.0,
            100.0,
        ),
    ];
    let mut worst = 0f64;
    let mut worst_truncated = 0f64;
    for d in drives {
        let s = model::dressed_state(&p, &d).unwrap();
        let span = 50.0 * s.gamma_eff;
        let points = 4001;
        let h = 2.0 * span / (points - 1) as f64;
        let mut total = 0.0;
        let mut truncated = 0.0;
        for center in [s.omega_eff, -s.omega_eff] {
            let omegas: Vec<f64> = (0..points).map(|i| center - span + h * i as f64).collect();
            let y = displacement_psd(&p, &d, &omegas).unwrap();
            let body = simpson(&y, h);
            // Beyond the grid each lobe decays as 1/u², so ∫_L^∞ ≈ S(L)·L.
            let tails = (y[0] + y[points - 1]) * span;
            truncated += body;
            total += body + tails;
        }
        let expected = 2.0 * s.n_f + s.beta_dressed;
        let to_hz = 1.0 / std::f64::consts::TAU;
        worst = worst.max(rel(total * to_hz, expected));
        worst_truncated = worst_truncated.max(rel(truncated * to_hz, expected));
    }
    report(
        11,
        "displacement-spectrum normalization",
        worst < 1e-3,
        format!(
            "worst relative error {worst:.2e} with analytic tails ({worst_truncated:.2e} for the bare ±50Γ_eff window)"
        ),
    );
}

#[test]
fn c12_determinism_and_serialization() {
    let rt = RoundTrip::new();
    let clean = rt.clean(0.3, 0.5);
    let a = synthesize(&clean, 10_000, 12).unwrap();
    let b = synthesize(&clean, 10_000, 12).unwrap();
    let synth_same = spectrum_to_csv(&a) == spectrum_to_csv(&b);

    let ledger = || {
        let sweep = SyntheticSweepSpec::power_sweep(6, 1_000_000, 12).generate().unwrap();
        let out = run_sweep(&sweep.config, &sweep.source()).unwrap();
        out.ledger_jsonl(&sweep.config.params().unwrap())
    };
    let (l1, l2) = (ledger(), ledger());
    let ledger_same = !l1.is_empty() && l1.as_bytes() == l2.as_bytes();

    let back = spectrum_from_csv(&spectrum_to_csv(&a), a.meta.clone()).unwrap();
    let bits = |s: &Spectrum| -> Vec<(u64, u64)> {
        s.freqs
            .iter()
            .zip(&s.psd)
            .map(|(f, v)| (f.to_bits(), v.to_bits()))
            .collect()
    };
    let csv_exact = bits(&back) == bits(&a) && back.meta == a.meta;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spectrum.csv");
    write_spectrum(&path, &a).unwrap();
    let from_file = read_spectrum(&path).unwrap();
    let file_exact = bits(&from_file) == bits(&a) && from_file.meta == a.meta;

    let ok = synth_same && ledger_same && csv_exact && file_exact;
    report(
        12,
        "determinism and serialization",
        ok,
        format!(
            "synthesis identical: {synth_same}, ledger identical: {ledger_same} ({} bytes), CSV bit-exact: {csv_exact}, file bit-exact: {file_exact}",
            l1.len()
        ),
    );
}
