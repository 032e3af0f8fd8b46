//! Exit status mapping: 1 for a violated invariant, 2 for bad input.

use std::fmt;

use cvqkd_core::Error;

#[derive(Debug)]
pub enum CliError {
    BadInput(String),
    Invariant(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::BadInput(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        CliError::Invariant(msg.into())
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::BadInput(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::BadInput(m) => write!(f, "bad input: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnphysicalFit { .. }
            | Error::NumericalDegeneracy { .. }
            | Error::UnphysicalSpectrum { .. }
            | Error::BelowShotNoise { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::BadInput(format!("csv output: {e}"))
    }
}
