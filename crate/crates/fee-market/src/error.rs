use fee_market_core::Error as CoreError;
use thiserror::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag, config key or value. The message names the flag.
    #[error("--{flag}: {message}")]
    Validation { flag: String, message: String },
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn validation(flag: &str, message: impl Into<String>) -> Self {
        Self::Validation {
            flag: flag.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } => 2,
            Self::Solver(_) => 3,
            Self::Simulation(_) => 4,
            Self::Io(_) => 1,
        }
    }

    /// Parameter errors from the core map to the flag of the same name;
    /// anything else is a solver failure.
    pub fn from_solver(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParam { name, reason } => Self::validation(name, reason),
            other => Self::Solver(other.to_string()),
        }
    }

    pub fn from_simulation(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParam { name, reason } => Self::validation(name, reason),
            other => Self::Simulation(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
