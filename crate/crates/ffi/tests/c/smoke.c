#include <math.h>
#include <stdio.h>

#include "sideband.h"

#define CHECK(call)                                                            \
  do {                                                                         \
    SbStatus s_ = (call);                                                      \
    if (s_ != SB_STATUS_OK) {                                                  \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                        \
              sb_last_error_message());                                        \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(void) {
  SbDevice dev;
  SbSystem *sys = NULL;
  SbSpectrum *spec = NULL;
  SbFit *fit = NULL;
  SbDrive drive = {-5.17e9, -100e6, 300e6, 400.0, 400.0 / 6.0};
  SbDressedState state;
  SbOccupancy occ;
  SbCalibration cal;

  CHECK(sb_device_demo(&dev));
  CHECK(sb_system_new(&dev, &sys));
  CHECK(sb_dressed_state(sys, &drive, &state));
  CHECK(sb_spectrum_synthesize(sys, &drive, state.n_f, 0.064, 10.0, 10.0,
                               1000000, 5, &spec));
  CHECK(sb_fit_lorentzians(spec, SB_FIT_MODE_DOUBLE, SB_WEIGHTING_STATISTICAL,
                           &fit));
  CHECK(sb_occupancy_from_asymmetry(sys, fit, &drive, 10e6, &occ, &cal));
  printf("%.17g %.17g %.17g %.17g\n", state.n_f, occ.n_f, occ.sigma_hi,
         cal.c_cal);

  if (sb_system_new(NULL, &sys) != SB_STATUS_NULL_POINTER ||
      sb_last_error_message() == NULL) {
    fprintf(stderr, "null device not rejected\n");
    return 1;
  }
  sb_fit_free(fit);
  sb_spectrum_free(spec);
  sb_system_free(sys);
  return 0;
}
