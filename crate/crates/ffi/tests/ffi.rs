use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sideband_core::fitting::{fit_lorentzians, FitMode, FitOptions};
use sideband_core::model::{self, DriveConfig, SystemParams};
use sideband_core::spectra;
use sideband_core::sweeps::synthetic::MAX_BINS;
use sideband_core::thermometry::{self, ThermoOptions};
use sideband_core::units::hz_to_angular;
use sideband_ffi::*;

fn demo_system() -> *mut SbSystem {
    let mut dev = SbDevice {
        kappa_hz: 0.0,
        kappa_ex_hz: 0.0,
        omega_m_hz: 0.0,
        gamma_int_hz: 0.0,
        gamma_gas_hz: 0.0,
        g0_hz: 0.0,
        temperature_k: 0.0,
        alpha_opt: 0.0,
        beta_mech: 0.0,
        occupancy_convention: 0,
    };
    let mut sys = ptr::null_mut();
    unsafe {
        assert_eq!(sb_device_demo(&mut dev), SbStatus::Ok);
        assert_eq!(sb_system_new(&dev, &mut sys), SbStatus::Ok);
    }
    sys
}

const DRIVE: SbDrive = SbDrive {
    delta_c_hz: -5.17e9,
    delta_hz: -100e6,
    delta_lo_hz: 300e6,
    n_c: 400.0,
    n_b: 400.0 / 6.0,
};

fn core_drive(p: &SystemParams) -> DriveConfig {
    DriveConfig::from_cooling_detuning(
        p,
        hz_to_angular(DRIVE.delta_c_hz),
        hz_to_angular(DRIVE.delta_hz),
        hz_to_angular(DRIVE.delta_lo_hz),
        DRIVE.n_c,
        DRIVE.n_b,
    )
}

fn last_error() -> String {
    let p = sb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn dressed_state_matches_core() {
    let sys = demo_system();
    let mut out = SbDressedState::default();
    unsafe {
        assert_eq!(sb_dressed_state(sys, &DRIVE, &mut out), SbStatus::Ok);
        sb_system_free(sys);
    }
    let p = SystemParams::demo();
    assert_eq!(out.n_f, model::final_occupancy(&p, &core_drive(&p)).unwrap());
    assert_eq!(out.beta_dressed, 1.0);
    assert!(sb_last_error_message().is_null());
}

#[test]
fn synthesize_fit_and_thermometry_match_core() {
    let sys = demo_system();
    let p = SystemParams::demo();
    let d = core_drive(&p);
    let n_f = model::final_occupancy(&p, &d).unwrap();
    let (mut spec, mut fit) = (ptr::null_mut(), ptr::null_mut());
    let mut occ = SbOccupancy::default();
    let mut cal = SbCalibration::default();
    let mut summary = SbFitSummary::default();
    unsafe {
        assert_eq!(
            sb_spectrum_synthesize(sys, &DRIVE, n_f, 0.064, 10.0, 10.0, 1_000_000, 5, &mut spec),
            SbStatus::Ok
        );
        assert_eq!(
            sb_fit_lorentzians(spec, SbFitMode::Double, SbWeighting::Uniform, &mut fit),
            SbStatus::Ok
        );
        assert_eq!(sb_fit_summary(fit, &mut summary), SbStatus::Ok);
        assert_eq!(
            sb_occupancy_from_asymmetry(sys, fit, &DRIVE, 10e6, &mut occ, &mut cal),
            SbStatus::Ok
        );
    }

    let grid = spectra::sideband_grid(&p, &d, 10.0, 10.0, MAX_BINS).unwrap();
    let clean = spectra::heterodyne_psd(&p, &d, n_f, 0.064, &grid).unwrap();
    let direct = spectra::synthesize(&clean, 1_000_000, 5).unwrap();
    let len = unsafe { sb_spectrum_len(spec) };
    assert_eq!(len, direct.len());
    let (mut freqs, mut psd) = (vec![0.0; len], vec![0.0; len]);
    unsafe {
        assert_eq!(
            sb_spectrum_copy(spec, freqs.as_mut_ptr(), psd.as_mut_ptr(), len),
            SbStatus::Ok
        );
        assert_eq!(
            sb_spectrum_copy(spec, freqs.as_mut_ptr(), psd.as_mut_ptr(), len - 1),
            SbStatus::InvalidArgument
        );
    }
    assert_eq!((freqs, psd), (direct.freqs.clone(), direct.psd.clone()));

    let f = fit_lorentzians(&direct, FitMode::Double, None, &FitOptions::default()).unwrap();
    let (e, c) = thermometry::occupancy_from_asymmetry(&f, &p, &d, &ThermoOptions::default()).unwrap();
    assert_eq!(occ.n_f, e.n_f);
    assert_eq!(occ.sigma_hi, e.sigma_hi);
    assert_eq!(cal.c_cal, c.c_cal);
    assert!(summary.center2_hz > summary.center1_hz);
    unsafe {
        sb_fit_free(fit);
        sb_spectrum_free(spec);
        sb_system_free(sys);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut sys = ptr::null_mut();
    unsafe {
        assert_eq!(sb_system_new(ptr::null(), &mut sys), SbStatus::NullPointer);
        assert!(last_error().contains("device"));

        let mut dev = std::mem::zeroed::<SbDevice>();
        sb_device_demo(&mut dev);
        dev.kappa_ex_hz = 2.0 * dev.kappa_hz;
        assert_eq!(sb_system_new(&dev, &mut sys), SbStatus::InvalidArgument);
        assert!(last_error().contains("kappa"));
        dev.kappa_ex_hz = 71e6;
        dev.occupancy_convention = 7;
        assert_eq!(sb_system_new(&dev, &mut sys), SbStatus::InvalidArgument);
    }

    let sys = demo_system();
    let unstable = SbDrive { n_b: 2000.0, ..DRIVE };
    let mut state = SbDressedState::default();
    unsafe {
        assert_eq!(sb_dressed_state(sys, &unstable, &mut state), SbStatus::Computation);
        let missing = CString::new("/nonexistent/spectrum.csv").unwrap();
        let mut spec = ptr::null_mut();
        assert_eq!(sb_spectrum_read(missing.as_ptr(), &mut spec), SbStatus::Io);
        assert!(spec.is_null());
        sb_system_free(sys);
        sb_system_free(ptr::null_mut());
        sb_spectrum_free(ptr::null_mut());
        sb_fit_free(ptr::null_mut());
    }
}

#[test]
fn spectrum_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.csv").to_str().unwrap()).unwrap();
    let sys = demo_system();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        let p = SystemParams::demo();
        let n_f = model::final_occupancy(&p, &core_drive(&p)).unwrap();
        assert_eq!(
            sb_spectrum_synthesize(sys, &DRIVE, n_f, 0.064, 10.0, 10.0, 1000, 1, &mut a),
            SbStatus::Ok
        );
        assert_eq!(sb_spectrum_write(a, path.as_ptr()), SbStatus::Ok);
        assert_eq!(sb_spectrum_read(path.as_ptr(), &mut b), SbStatus::Ok);
        let n = sb_spectrum_len(a);
        let mut va = (vec![0.0; n], vec![0.0; n]);
        let mut vb = (vec![0.0; n], vec![0.0; n]);
        sb_spectrum_copy(a, va.0.as_mut_ptr(), va.1.as_mut_ptr(), n);
        sb_spectrum_copy(b, vb.0.as_mut_ptr(), vb.1.as_mut_ptr(), n);
        assert_eq!(va, vb);
        sb_spectrum_free(a);
        sb_spectrum_free(b);
        sb_system_free(sys);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(sb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/sideband.h")).unwrap();
    let source = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Compile and run a C program against the generated header and the static
/// library. Needs a C compiler on PATH.
#[test]
fn c_program_links_and_agrees() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // `cargo test` refreshes the static library next to the test binary in
    // target/<profile>/deps; the copy in target/<profile> may be stale.
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libsideband_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
    let p = SystemParams::demo();
    let d = core_drive(&p);
    let n_f = model::final_occupancy(&p, &d).unwrap();
    assert_eq!(values[0], n_f);
    let grid = spectra::sideband_grid(&p, &d, 10.0, 10.0, MAX_BINS).unwrap();
    let s = spectra::synthesize(
        &spectra::heterodyne_psd(&p, &d, n_f, 0.064, &grid).unwrap(),
        1_000_000,
        5,
    )
    .unwrap();
    let f = fit_lorentzians(&s, FitMode::Double, None, &FitOptions::statistical()).unwrap();
    let (e, c) = thermometry::occupancy_from_asymmetry(&f, &p, &d, &ThermoOptions::default()).unwrap();
    assert_eq!(values[1], e.n_f);
    assert_eq!(values[2], e.sigma_hi);
    assert_eq!(values[3], c.c_cal);
}
