use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] marta::Error),

    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Validation(String),
}

impl CliError {
    /// 1 for verification or validation failures, 2 for I/O and configuration.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Core(marta::Error::NonFinite(_)) => 1,
            _ => 2,
        }
    }
}
