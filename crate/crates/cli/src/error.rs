use std::path::Path;

use thiserror::Error;

/// Failures mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or mutually inconsistent input (exit 2).
    #[error("{0}")]
    Input(String),
    /// Too little data or too little attitude excitation (exit 3).
    #[error("{0}")]
    Degenerate(String),
    /// A solver stopped on a singular system or non-finite values (exit 4).
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<magcal::Error> for CliError {
    fn from(e: magcal::Error) -> Self {
        match e {
            magcal::Error::InsufficientData { .. } | magcal::Error::DegenerateExcitation(_) => {
                CliError::Degenerate(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
