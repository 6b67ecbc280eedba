//! C ABI over `sideband-core`.
//!
//! Objects cross the boundary as opaque handles created by `sb_*_new` /
//! producer functions and released with the matching `sb_*_free`. Plain
//! data crosses as `#[repr(C)]` structs in ordinary-frequency units (Hz).
//! Every fallible call returns an [`SbStatus`]; on failure the message is
//! available from [`sb_last_error_message`] on the same thread. Panics are
//! caught at the boundary and reported as [`SbStatus::Panic`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sideband_core::fitting::{fit_lorentzians, FitMode, FitOptions, LorentzianFitResult, LorentzianParam, Weighting};
use sideband_core::model::{self, DeviceHz, DriveConfig, SystemParams};
use sideband_core::spectra::{self, Spectrum};
use sideband_core::sweeps::synthetic::MAX_BINS;
use sideband_core::thermometry::{self, ThermoOptions};
use sideband_core::units::{angular_to_hz, hz_to_angular, OccupancyConvention};
use sideband_core::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Computation = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbFitMode {
    Single = 0,
    Double = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbWeighting {
    Uniform = 0,
    Statistical = 1,
}

/// Device parameters. `occupancy_convention`: 0 Rayleigh–Jeans, 1 Bose.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SbDevice {
    pub kappa_hz: f64,
    pub kappa_ex_hz: f64,
    pub omega_m_hz: f64,
    pub gamma_int_hz: f64,
    pub gamma_gas_hz: f64,
    pub g0_hz: f64,
    pub temperature_k: f64,
    pub alpha_opt: f64,
    pub beta_mech: f64,
    pub occupancy_convention: u32,
}

/// Two-tone drive; `n_b = 0` for a single cooling tone.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SbDrive {
    pub delta_c_hz: f64,
    pub delta_hz: f64,
    pub delta_lo_hz: f64,
    pub n_c: f64,
    pub n_b: f64,
}

/// `n_min` is NaN when the Raman processes give no net damping.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SbDressedState {
    pub gamma_b_hz: f64,
    pub gamma_c_hz: f64,
    pub gamma_opt_hz: f64,
    pub gamma_eff_hz: f64,
    pub spring_hz: f64,
    pub omega_eff_hz: f64,
    pub n_th: f64,
    pub n_f: f64,
    pub n_min: f64,
    pub beta_dressed: f64,
    pub strong_coupling: bool,
}

/// Fitted Lorentzian parameters with 1σ errors. Sideband-2 fields are NaN
/// for single fits.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SbFitSummary {
    pub background: f64,
    pub background_sigma: f64,
    pub area1_hz: f64,
    pub area1_sigma_hz: f64,
    pub center1_hz: f64,
    pub center1_sigma_hz: f64,
    pub area2_hz: f64,
    pub area2_sigma_hz: f64,
    pub center2_hz: f64,
    pub center2_sigma_hz: f64,
    pub gamma_eff_hz: f64,
    pub gamma_eff_sigma_hz: f64,
    pub reduced_chi2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SbOccupancy {
    pub n_f: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SbCalibration {
    pub c_cal: f64,
    pub c_cal_sigma: f64,
}

/// Opaque system parameters.
pub struct SbSystem(SystemParams);
/// Opaque spectrum.
pub struct SbSpectrum(Spectrum);
/// Opaque Lorentzian fit.
pub struct SbFit(LorentzianFitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SbStatus, message: &str) -> SbStatus {
    set_error(message);
    status
}

fn from_error(e: impl Into<Error>) -> SbStatus {
    let e = e.into();
    let status = match e.kind() {
        ErrorKind::InvalidInput => SbStatus::InvalidArgument,
        ErrorKind::Io => SbStatus::Io,
        ErrorKind::Computation => SbStatus::Computation,
    };
    fail(status, &e.to_string())
}

/// Run `f` with panics converted to [`SbStatus::Panic`].
fn guard(f: impl FnOnce() -> SbStatus) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SbStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SbStatus::Panic, &format!("panic: {msg}"))
        }
    }
}

macro_rules! deref {
    ($p:expr, $name:literal) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(SbStatus::NullPointer, concat!("`", $name, "` is null")),
        }
    };
}

macro_rules! out {
    ($p:expr, $name:literal) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => return fail(SbStatus::NullPointer, concat!("`", $name, "` is null")),
        }
    };
}

fn path_arg(p: *const c_char) -> Result<PathBuf, SbStatus> {
    if p.is_null() {
        return Err(fail(SbStatus::NullPointer, "`path` is null"));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(SbStatus::InvalidArgument, "path is not UTF-8"))
}

fn drive(params: &SystemParams, d: &SbDrive) -> DriveConfig {
    DriveConfig::from_cooling_detuning(
        params,
        hz_to_angular(d.delta_c_hz),
        hz_to_angular(d.delta_hz),
        hz_to_angular(d.delta_lo_hz),
        d.n_c,
        d.n_b,
    )
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fill `out` with the bundled demo device.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_device_demo(out: *mut SbDevice) -> SbStatus {
    guard(|| {
        let out = out!(out, "out");
        let d = DeviceHz::demo_device();
        *out = SbDevice {
            kappa_hz: d.kappa_hz,
            kappa_ex_hz: d.kappa_ex_hz,
            omega_m_hz: d.omega_m_hz,
            gamma_int_hz: d.gamma_int_hz,
            gamma_gas_hz: d.gamma_gas_hz,
            g0_hz: d.g0_hz,
            temperature_k: d.temperature_k,
            alpha_opt: d.alpha_opt,
            beta_mech: d.beta_mech,
            occupancy_convention: 0,
        };
        SbStatus::Ok
    })
}

/// Validate a device and create a system handle.
///
/// # Safety
/// `device` must be null or point to a valid `SbDevice`; `out` must be null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_system_new(device: *const SbDevice, out: *mut *mut SbSystem) -> SbStatus {
    guard(|| {
        let d = deref!(device, "device");
        let out = out!(out, "out");
        let convention = match d.occupancy_convention {
            0 => OccupancyConvention::RayleighJeans,
            1 => OccupancyConvention::Bose,
            other => {
                return fail(
                    SbStatus::InvalidArgument,
                    &format!("unknown occupancy convention {other}"),
                )
            }
        };
        let dev = DeviceHz {
            kappa_hz: d.kappa_hz,
            kappa_ex_hz: d.kappa_ex_hz,
            omega_m_hz: d.omega_m_hz,
            gamma_int_hz: d.gamma_int_hz,
            gamma_gas_hz: d.gamma_gas_hz,
            g0_hz: d.g0_hz,
            temperature_k: d.temperature_k,
            alpha_opt: d.alpha_opt,
            beta_mech: d.beta_mech,
            x_zpf_m: None,
            occupancy_convention: convention,
        };
        match SystemParams::from_hz(&dev) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(SbSystem(p)));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `system` must be null or a handle from [`sb_system_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_system_free(system: *mut SbSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Rates, spring shift and occupancies of a drive.
///
/// # Safety
/// Pointers must be null or valid; `system` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_dressed_state(
    system: *const SbSystem,
    drive_hz: *const SbDrive,
    out: *mut SbDressedState,
) -> SbStatus {
    guard(|| {
        let p = &deref!(system, "system").0;
        let d = drive(p, deref!(drive_hz, "drive"));
        let out = out!(out, "out");
        if let Err(e) = d.validate() {
            return from_error(e);
        }
        match model::dressed_state(p, &d) {
            Ok(s) => {
                *out = SbDressedState {
                    gamma_b_hz: angular_to_hz(s.gamma_b),
                    gamma_c_hz: angular_to_hz(s.gamma_c),
                    gamma_opt_hz: angular_to_hz(s.gamma_opt),
                    gamma_eff_hz: angular_to_hz(s.gamma_eff),
                    spring_hz: angular_to_hz(s.spring_shift),
                    omega_eff_hz: angular_to_hz(s.omega_eff),
                    n_th: p.n_th,
                    n_f: s.n_f,
                    n_min: s.n_min.unwrap_or(f64::NAN),
                    beta_dressed: s.beta_dressed,
                    strong_coupling: s.strong_coupling,
                };
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Seeded synthetic heterodyne spectrum at occupancy `n_f` on a grid of
/// `bins_per_linewidth` bins per `Γ_eff` reaching `linewidths` linewidths
/// beyond each sideband.
///
/// # Safety
/// Pointers must be null or valid; `system` must be a live handle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sb_spectrum_synthesize(
    system: *const SbSystem,
    drive_hz: *const SbDrive,
    n_f: f64,
    eta: f64,
    bins_per_linewidth: f64,
    linewidths: f64,
    averages: u64,
    seed: u64,
    out: *mut *mut SbSpectrum,
) -> SbStatus {
    guard(|| {
        let p = &deref!(system, "system").0;
        let d = drive(p, deref!(drive_hz, "drive"));
        let out = out!(out, "out");
        let result = spectra::sideband_grid(p, &d, bins_per_linewidth, linewidths, MAX_BINS)
            .and_then(|g| spectra::heterodyne_psd(p, &d, n_f, eta, &g))
            .and_then(|clean| spectra::synthesize(&clean, averages, seed));
        match result {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SbSpectrum(s)));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Read a spectrum CSV and its sidecar.
///
/// # Safety
/// `path` must be null or a nul-terminated string; `out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sb_spectrum_read(path: *const c_char, out: *mut *mut SbSpectrum) -> SbStatus {
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let out = out!(out, "out");
        match spectra::read_spectrum(&path) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SbSpectrum(s)));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Write a spectrum CSV and its sidecar atomically.
///
/// # Safety
/// `spectrum` must be a live handle or null; `path` null or nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn sb_spectrum_write(spectrum: *const SbSpectrum, path: *const c_char) -> SbStatus {
    guard(|| {
        let s = &deref!(spectrum, "spectrum").0;
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(st) => return st,
        };
        match spectra::write_spectrum(&path, s) {
            Ok(()) => SbStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Number of bins, 0 for a null handle.
///
/// # Safety
/// `spectrum` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sb_spectrum_len(spectrum: *const SbSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.0.len())
}

/// Copy frequencies (Hz) and PSD values into caller buffers of `len`
/// elements; `len` must equal [`sb_spectrum_len`].
///
/// # Safety
/// Buffers must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sb_spectrum_copy(
    spectrum: *const SbSpectrum,
    freqs_hz: *mut f64,
    psd: *mut f64,
    len: usize,
) -> SbStatus {
    guard(|| {
        let s = &deref!(spectrum, "spectrum").0;
        if freqs_hz.is_null() || psd.is_null() {
            return fail(SbStatus::NullPointer, "output buffer is null");
        }
        if len != s.len() {
            return fail(
                SbStatus::InvalidArgument,
                &format!("buffer length {len} does not match spectrum length {}", s.len()),
            );
        }
        ptr::copy_nonoverlapping(s.freqs.as_ptr(), freqs_hz, len);
        ptr::copy_nonoverlapping(s.psd.as_ptr(), psd, len);
        SbStatus::Ok
    })
}

/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_spectrum_free(spectrum: *mut SbSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Fit one or two shared-width Lorentzians with automatic initial values.
///
/// # Safety
/// `spectrum` must be null or a live handle; `out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sb_fit_lorentzians(
    spectrum: *const SbSpectrum,
    mode: SbFitMode,
    weighting: SbWeighting,
    out: *mut *mut SbFit,
) -> SbStatus {
    guard(|| {
        let s = &deref!(spectrum, "spectrum").0;
        let out = out!(out, "out");
        let mode = match mode {
            SbFitMode::Single => FitMode::Single,
            SbFitMode::Double => FitMode::Double,
        };
        let options = FitOptions {
            weighting: match weighting {
                SbWeighting::Uniform => Weighting::Uniform,
                SbWeighting::Statistical => Weighting::Statistical,
            },
            ..FitOptions::default()
        };
        match fit_lorentzians(s, mode, None, &options) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(SbFit(f)));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `fit` must be null or a live handle; `out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sb_fit_summary(fit: *const SbFit, out: *mut SbFitSummary) -> SbStatus {
    guard(|| {
        let f = &deref!(fit, "fit").0;
        let out = out!(out, "out");
        use LorentzianParam::*;
        let double = f.mode == FitMode::Double;
        let hz = |p: LorentzianParam| angular_to_hz(f.value(p));
        let hz_sigma = |p: LorentzianParam| angular_to_hz(f.sigma(p));
        let second = |v: f64| if double { v } else { f64::NAN };
        *out = SbFitSummary {
            background: f.params.background,
            background_sigma: f.sigma(Background),
            area1_hz: hz(Area1),
            area1_sigma_hz: hz_sigma(Area1),
            center1_hz: hz(Center1),
            center1_sigma_hz: hz_sigma(Center1),
            area2_hz: second(hz(Area2)),
            area2_sigma_hz: second(hz_sigma(Area2)),
            center2_hz: second(hz(Center2)),
            center2_sigma_hz: second(hz_sigma(Center2)),
            gamma_eff_hz: hz(GammaEff),
            gamma_eff_sigma_hz: hz_sigma(GammaEff),
            reduced_chi2: f.reduced_chi2,
        };
        SbStatus::Ok
    })
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_fit_free(fit: *mut SbFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Sideband-asymmetry occupancy and calibration from a double fit.
/// `calibration` may be null.
///
/// # Safety
/// Handles must be live or null; other pointers null or valid.
#[no_mangle]
pub unsafe extern "C" fn sb_occupancy_from_asymmetry(
    system: *const SbSystem,
    fit: *const SbFit,
    drive_hz: *const SbDrive,
    detuning_sigma_hz: f64,
    out: *mut SbOccupancy,
    calibration: *mut SbCalibration,
) -> SbStatus {
    guard(|| {
        let p = &deref!(system, "system").0;
        let f = &deref!(fit, "fit").0;
        let d = drive(p, deref!(drive_hz, "drive"));
        let out = out!(out, "out");
        if !(detuning_sigma_hz >= 0.0) {
            return fail(SbStatus::InvalidArgument, "detuning_sigma_hz must be >= 0");
        }
        let options = ThermoOptions {
            detuning_sigma: hz_to_angular(detuning_sigma_hz),
        };
        match thermometry::occupancy_from_asymmetry(f, p, &d, &options) {
            Ok((e, c)) => {
                *out = SbOccupancy {
                    n_f: e.n_f,
                    sigma_lo: e.sigma_lo,
                    sigma_hi: e.sigma_hi,
                };
                if let Some(cal) = calibration.as_mut() {
                    *cal = SbCalibration {
                        c_cal: c.c_cal,
                        c_cal_sigma: c.c_cal_sigma,
                    };
                }
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
