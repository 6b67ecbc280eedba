//! Modeling, synthesis, fitting and thermometry for resolved-sideband laser
//! cooling of an optomechanical oscillator.
//!
//! * [`model`]: closed-form two-tone theory (scattering rates, optical
//!   spring, occupancies, dressed susceptibility).
//! * [`spectra`]: shot-noise-normalized heterodyne spectra, displacement
//!   spectra, seeded synthesis and CSV/JSON persistence.
//! * [`fitting`]: damped Gauss–Newton fits of Lorentzian sidebands and of
//!   the coherent cavity response.
//! * [`thermometry`]: sideband-asymmetry and noise-anchored occupancy.
//! * [`sweeps`]: power/detuning sweep orchestration, heating and
//!   detection-efficiency regressions.
//! * [`io`]: configuration files, atomic writes, ledgers and tables.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod io;
pub mod model;
pub mod spectra;
pub mod sweeps;
pub mod thermometry;
pub mod units;

pub use error::{Error, ErrorKind};
