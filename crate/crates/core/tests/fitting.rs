use sideband_core::fitting::{fit_lorentzians, FitMode, FitOptions, LorentzianParam, LorentzianParams};
use sideband_core::spectra::{synthesize, FrequencyGrid, Spectrum, SpectrumMeta};
use sideband_core::units::hz_to_angular;

fn clean(params: &LorentzianParams, mode: FitMode, grid: &FrequencyGrid) -> Spectrum {
    let psd = grid
        .freqs()
        .iter()
        .map(|&f| params.eval(hz_to_angular(f), mode))
        .collect();
    Spectrum::new(grid.freqs(), psd, SpectrumMeta::plain(grid.step_hz)).unwrap()
}

#[test]
fn area_recovery_and_coverage_over_seeds() {
    // Γ_eff/2π = 2 MHz, peak 5× the floor, 200 averages.
    let gamma = hz_to_angular(2e6);
    let truth = LorentzianParams {
        background: 1.0,
        area1: 5.0 * gamma / 4.0,
        center1: hz_to_angular(50e6),
        area2: 0.0,
        center2: 0.0,
        gamma_eff: gamma,
    };
    let spectrum = clean(&truth, FitMode::Single, &FrequencyGrid::new(30e6, 70e6, 401).unwrap());
    let mut covered = 0;
    for seed in 0..100 {
        let noisy = synthesize(&spectrum, 200, seed).unwrap();
        let fit = fit_lorentzians(&noisy, FitMode::Single, None, &FitOptions::statistical()).unwrap();
        let e = fit.area1() - truth.area1;
        assert!(e.abs() < 0.05 * truth.area1, "seed {seed}: {}", e / truth.area1);
        if e.abs() <= 2.0 * fit.sigma(LorentzianParam::Area1) {
            covered += 1;
        }
    }
    assert!(covered >= 95, "{covered}");
}

#[test]
fn weak_second_peak_is_not_taken_from_the_shoulder() {
    let gamma = hz_to_angular(2e6);
    let truth = LorentzianParams {
        background: 1.0,
        area1: 1.2 * gamma / 4.0,
        center1: hz_to_angular(40e6),
        area2: 5.0 * gamma / 4.0,
        center2: hz_to_angular(60e6),
        gamma_eff: gamma,
    };
    let spectrum = clean(
        &truth,
        FitMode::Double,
        &FrequencyGrid::with_max_step(20e6, 80e6, 40e3).unwrap(),
    );
    for seed in 0..100 {
        let noisy = synthesize(&spectrum, 200, seed).unwrap();
        let fit = fit_lorentzians(&noisy, FitMode::Double, None, &FitOptions::statistical()).unwrap();
        assert!((fit.center1() - truth.center1).abs() < gamma, "seed {seed}");
        assert!((fit.center2().unwrap() - truth.center2).abs() < gamma, "seed {seed}");
    }
}
