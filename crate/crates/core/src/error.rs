use std::path::PathBuf;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate samples: {0}")]
    DegenerateSamples(&'static str),

    #[error("unphysical fit: estimated gain t_hat = {t_hat} must be positive")]
    UnphysicalFit { t_hat: f64 },

    #[error(
        "estimation block of {m} samples is below the normal-approximation threshold {min}; \
         pass an explicit override to proceed"
    )]
    SampleSizeBelowThreshold { m: usize, min: usize },

    #[error("numerical degeneracy in {which}: discriminant {discriminant:e}")]
    NumericalDegeneracy {
        which: &'static str,
        discriminant: f64,
    },

    #[error("unphysical covariance: symplectic eigenvalue lambda_{index} = {value} < 1")]
    UnphysicalSpectrum { index: usize, value: f64 },

    #[error("monitor reading below shot noise: practical variance {v_p} < 0 (calibration fault)")]
    BelowShotNoise { v_p: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
