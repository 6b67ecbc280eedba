#ifndef SIDEBAND_H
#define SIDEBAND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_ARGUMENT = 2,
  SB_STATUS_IO = 3,
  SB_STATUS_COMPUTATION = 4,
  SB_STATUS_PANIC = 5,
} SbStatus;

typedef enum SbFitMode {
  SB_FIT_MODE_SINGLE = 0,
  SB_FIT_MODE_DOUBLE = 1,
} SbFitMode;

typedef enum SbWeighting {
  SB_WEIGHTING_UNIFORM = 0,
  SB_WEIGHTING_STATISTICAL = 1,
} SbWeighting;

// Opaque Lorentzian fit.
typedef struct SbFit SbFit;

// Opaque spectrum.
typedef struct SbSpectrum SbSpectrum;

// Opaque system parameters.
typedef struct SbSystem SbSystem;

// Device parameters. `occupancy_convention`: 0 Rayleigh–Jeans, 1 Bose.
typedef struct SbDevice {
  double kappa_hz;
  double kappa_ex_hz;
  double omega_m_hz;
  double gamma_int_hz;
  double gamma_gas_hz;
  double g0_hz;
  double temperature_k;
  double alpha_opt;
  double beta_mech;
  uint32_t occupancy_convention;
} SbDevice;

// Two-tone drive; `n_b = 0` for a single cooling tone.
typedef struct SbDrive {
  double delta_c_hz;
  double delta_hz;
  double delta_lo_hz;
  double n_c;
  double n_b;
} SbDrive;

// `n_min` is NaN when the Raman processes give no net damping.
typedef struct SbDressedState {
  double gamma_b_hz;
  double gamma_c_hz;
  double gamma_opt_hz;
  double gamma_eff_hz;
  double spring_hz;
  double omega_eff_hz;
  double n_th;
  double n_f;
  double n_min;
  double beta_dressed;
  bool strong_coupling;
} SbDressedState;

// Fitted Lorentzian parameters with 1σ errors. Sideband-2 fields are NaN
// for single fits.
typedef struct SbFitSummary {
  double background;
  double background_sigma;
  double area1_hz;
  double area1_sigma_hz;
  double center1_hz;
  double center1_sigma_hz;
  double area2_hz;
  double area2_sigma_hz;
  double center2_hz;
  double center2_sigma_hz;
  double gamma_eff_hz;
  double gamma_eff_sigma_hz;
  double reduced_chi2;
} SbFitSummary;

typedef struct SbOccupancy {
  double n_f;
  double sigma_lo;
  double sigma_hi;
} SbOccupancy;

typedef struct SbCalibration {
  double c_cal;
  double c_cal_sigma;
} SbCalibration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *sb_last_error_message(void);

// Library version as a static nul-terminated string.
const char *sb_version(void);

// Fill `out` with the bundled demo device.
//
// # Safety
// `out` must be null or valid for writes.
enum SbStatus sb_device_demo(struct SbDevice *out);

// Validate a device and create a system handle.
//
// # Safety
// `device` must be null or point to a valid `SbDevice`; `out` must be null
// or valid for writes.
enum SbStatus sb_system_new(const struct SbDevice *device, struct SbSystem **out);

// # Safety
// `system` must be null or a handle from [`sb_system_new`] not yet freed.
void sb_system_free(struct SbSystem *system);

// Rates, spring shift and occupancies of a drive.
//
// # Safety
// Pointers must be null or valid; `system` must be a live handle.
enum SbStatus sb_dressed_state(const struct SbSystem *system,
                               const struct SbDrive *drive_hz,
                               struct SbDressedState *out);

// Seeded synthetic heterodyne spectrum at occupancy `n_f` on a grid of
// `bins_per_linewidth` bins per `Γ_eff` reaching `linewidths` linewidths
// beyond each sideband.
//
// # Safety
// Pointers must be null or valid; `system` must be a live handle.
enum SbStatus sb_spectrum_synthesize(const struct SbSystem *system,
                                     const struct SbDrive *drive_hz,
                                     double n_f,
                                     double eta,
                                     double bins_per_linewidth,
                                     double linewidths,
                                     uint64_t averages,
                                     uint64_t seed,
                                     struct SbSpectrum **out);

// Read a spectrum CSV and its sidecar.
//
// # Safety
// `path` must be null or a nul-terminated string; `out` null or valid.
enum SbStatus sb_spectrum_read(const char *path, struct SbSpectrum **out);

// Write a spectrum CSV and its sidecar atomically.
//
// # Safety
// `spectrum` must be a live handle or null; `path` null or nul-terminated.
enum SbStatus sb_spectrum_write(const struct SbSpectrum *spectrum, const char *path);

// Number of bins, 0 for a null handle.
//
// # Safety
// `spectrum` must be a live handle or null.
size_t sb_spectrum_len(const struct SbSpectrum *spectrum);

// Copy frequencies (Hz) and PSD values into caller buffers of `len`
// elements; `len` must equal [`sb_spectrum_len`].
//
// # Safety
// Buffers must be null or valid for `len` writes.
enum SbStatus sb_spectrum_copy(const struct SbSpectrum *spectrum,
                               double *freqs_hz,
                               double *psd,
                               size_t len);

// # Safety
// `spectrum` must be null or a live handle.
void sb_spectrum_free(struct SbSpectrum *spectrum);

// Fit one or two shared-width Lorentzians with automatic initial values.
//
// # Safety
// `spectrum` must be null or a live handle; `out` null or valid.
enum SbStatus sb_fit_lorentzians(const struct SbSpectrum *spectrum,
                                 enum SbFitMode mode,
                                 enum SbWeighting weighting,
                                 struct SbFit **out);

// # Safety
// `fit` must be null or a live handle; `out` null or valid.
enum SbStatus sb_fit_summary(const struct SbFit *fit, struct SbFitSummary *out);

// # Safety
// `fit` must be null or a live handle.
void sb_fit_free(struct SbFit *fit);

// Sideband-asymmetry occupancy and calibration from a double fit.
// `calibration` may be null.
//
// # Safety
// Handles must be live or null; other pointers null or valid.
enum SbStatus sb_occupancy_from_asymmetry(const struct SbSystem *system,
                                          const struct SbFit *fit,
                                          const struct SbDrive *drive_hz,
                                          double detuning_sigma_hz,
                                          struct SbOccupancy *out,
                                          struct SbCalibration *calibration);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIDEBAND_H */
