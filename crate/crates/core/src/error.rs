use thiserror::Error;

use crate::fitting::FitError;
use crate::model::ModelError;
use crate::spectra::SpectrumError;
use crate::sweeps::SweepError;
use crate::thermometry::ThermoError;

/// Crate-level error, grouping the per-module errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Coarse error category, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    /// Bad parameters, configuration or file contents.
    InvalidInput,
    /// Filesystem failure.
    Io,
    /// Valid inputs, but the computation failed: no convergence, a
    /// degenerate regression, an unstable drive, unphysical estimates.
    Computation,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use ErrorKind::*;
        match self {
            Self::Model(e) => model_kind(e),
            Self::Spectrum(e) => spectrum_kind(e),
            Self::Fit(e) => fit_kind(e),
            Self::Thermo(e) => thermo_kind(e),
            Self::Sweep(e) => match e {
                SweepError::InsufficientRuns { .. } | SweepError::Degenerate(_) => Computation,
                SweepError::InvalidInput(_) | SweepError::Config(_) => InvalidInput,
                SweepError::Io { .. } => Io,
                SweepError::Model(e) => model_kind(e),
                SweepError::Spectrum(e) => spectrum_kind(e),
                SweepError::Fit(e) => fit_kind(e),
                SweepError::Thermo(e) => thermo_kind(e),
            },
        }
    }
}

fn model_kind(e: &ModelError) -> ErrorKind {
    match e {
        ModelError::InvalidParameter { .. } | ModelError::HeterodyneOrdering { .. } => ErrorKind::InvalidInput,
        ModelError::Unstable { .. } | ModelError::NoNetCooling { .. } => ErrorKind::Computation,
    }
}

fn spectrum_kind(e: &SpectrumError) -> ErrorKind {
    match e {
        SpectrumError::Io(_) => ErrorKind::Io,
        SpectrumError::Model(e) => model_kind(e),
        _ => ErrorKind::InvalidInput,
    }
}

fn fit_kind(e: &FitError) -> ErrorKind {
    match e {
        FitError::InvalidInput(_) => ErrorKind::InvalidInput,
        FitError::Spectrum(e) => spectrum_kind(e),
        _ => ErrorKind::Computation,
    }
}

fn thermo_kind(e: &ThermoError) -> ErrorKind {
    match e {
        ThermoError::NegativeOccupancy { .. } | ThermoError::AnchorInconsistent { .. } => ErrorKind::Computation,
        ThermoError::Model(e) => model_kind(e),
        _ => ErrorKind::InvalidInput,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds() {
        assert_eq!(
            Error::from(FitError::NoConvergence { iterations: 3 }).kind(),
            ErrorKind::Computation
        );
        assert_eq!(
            Error::from(SweepError::Config("x".into())).kind(),
            ErrorKind::InvalidInput
        );
        assert_eq!(
            Error::from(SweepError::Spectrum(SpectrumError::Io("x".into()))).kind(),
            ErrorKind::Io
        );
        assert_eq!(
            Error::from(ThermoError::NegativeOccupancy {
                cooling: 1.0,
                probe: 0.5
            })
            .kind(),
            ErrorKind::Computation
        );
    }
}
