//! Error-to-exit-code mapping: 0 success, 1 check failure, 2 configuration
//! error, 3 numerical error.

use std::fmt;

use polariton::continuum::ContinuumError;
use polariton::evolution::EvolutionError;
use polariton::model::ModelError;
use polariton::modes::ModesError;
use polariton::spectral::SpectralError;
use polariton::verify::VerifyError;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, schema violation, unusable paths. Exit 2.
    Config(String),
    /// A verification check failed. Exit 1.
    CheckFailure,
    /// A numerical routine could not produce a result. Exit 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailure => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::CheckFailure => write!(f, "verification failed"),
            CliError::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ModesError> for CliError {
    fn from(e: ModesError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<EvolutionError> for CliError {
    fn from(e: EvolutionError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ContinuumError> for CliError {
    fn from(e: ContinuumError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Numerical(format!("serialization: {e}"))
    }
}
