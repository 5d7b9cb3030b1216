use std::fmt;

/// Failure classes of a run, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed config or input file.
    Config(String),
    /// Well-formed input with values the library rejects.
    Validation(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Internal(_) => 1,
        }
    }

    /// Errors met while reading input files.
    pub fn config(e: spinmet::Error) -> Self {
        match e {
            spinmet::Error::Parse { .. } | spinmet::Error::Io(_) | spinmet::Error::InvalidHamiltonian(_) => CliError::Config(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }

    pub fn validation(e: spinmet::Error) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
