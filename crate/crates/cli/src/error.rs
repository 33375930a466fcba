use thiserror::Error;

/// Failures surfaced by the runner, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<kljn_core::Error> for CliError {
    fn from(e: kljn_core::Error) -> Self {
        match e {
            kljn_core::Error::Domain(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
