//! CLI error type carrying the stable exit-code contract.

use std::fmt;

/// Exit codes: 0 success, 2 config, 3 I/O, 4 missing prerequisite,
/// 5 data/shape, 6 verification failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    MissingPrerequisite(String),
    Data(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::MissingPrerequisite(_) => 4,
            CliError::Data(_) => 5,
            CliError::Verification(_) => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::MissingPrerequisite(m) => write!(f, "missing prerequisite: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ssdal_core::Error> for CliError {
    fn from(e: ssdal_core::Error) -> Self {
        match e {
            ssdal_core::Error::Config(m) => CliError::Config(m),
            ssdal_core::Error::Io(m) => CliError::Io(m.to_string()),
            ssdal_core::Error::Shape(m) | ssdal_core::Error::Validation(m)
            | ssdal_core::Error::Data(m) | ssdal_core::Error::Format(m) => CliError::Data(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
