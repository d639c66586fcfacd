use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(fracrom_core::Error),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("invalid artifact: {0}")]
    Artifact(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) | CliError::Artifact(_) => 4,
        }
    }
}

impl From<fracrom_core::Error> for CliError {
    fn from(e: fracrom_core::Error) -> Self {
        match e {
            fracrom_core::Error::Io(e) => CliError::Io(e.to_string()),
            fracrom_core::Error::Format(m) => CliError::Artifact(m),
            other => CliError::Numeric(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
