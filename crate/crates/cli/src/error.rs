use thiserror::Error;

use floqryd_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario file; the message names the offending key.
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("numerical failure in sample {index}: {message}")]
    Numerical { index: usize, message: String },
    #[error("numerical failure: {0}")]
    Simulation(CoreError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical { .. } | CliError::Simulation(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// Wraps a core error raised while interpreting the scenario key `key`.
    pub fn at(key: &str, e: CoreError) -> Self {
        match e {
            CoreError::SampleFailed { .. } => e.into(),
            other => CliError::Validation(format!("{key}: {other}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::SampleFailed { index, source } => CliError::Numerical {
                index,
                message: source.to_string(),
            },
            CoreError::InvalidConfig(m) => CliError::Validation(m),
            other => CliError::Simulation(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
