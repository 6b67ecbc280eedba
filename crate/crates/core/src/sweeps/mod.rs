//! Power- and detuning-sweep orchestration: theory tables, the heating and
//! detection-efficiency regressions, the run pipeline and synthetic sweeps.

mod config;
mod heating;
mod linear;
mod pipeline;
mod snr;
pub mod synthetic;
mod theory;

pub use config::{AnchorConfig, RunSpec, SnrFitChoice, SweepConfig, ToneSpec};
pub use heating::{
    excess_bath, fit_heating, HeatingFit, HeatingPoint, HEATING_CONDITION_LIMIT, HEATING_MIN_RUNS, HEATING_MIN_SPAN,
};
pub use pipeline::{
    run_sweep, write_outputs, DirSource, LedgerEntry, MemorySource, Regression, RunFailure, RunKind, SpectrumSource,
    SweepOutcome, SweepRun, SweepSummary,
};
pub use snr::{
    fit_snr, sideband_cooperativity, snr_theory, SnrFit, SnrFitMode, SnrModel, SnrPoint, SNR_CONDITION_LIMIT,
};
pub use theory::{
    linspace, logspace, single_tone_drive, theory_at_points, theory_curves, PhotonSource, SweepVariable, TheoryGrid,
    TheoryRow, TheoryTable,
};

use thiserror::Error;

use crate::fitting::FitError;
use crate::model::ModelError;
use crate::spectra::SpectrumError;
use crate::thermometry::ThermoError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("need at least {needed} runs, got {got}")]
    InsufficientRuns { needed: usize, got: usize },
    #[error("degenerate regression: {0}")]
    Degenerate(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}
