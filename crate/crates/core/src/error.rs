//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// All failure modes surfaced by the library.
///
/// The variants map one-to-one onto the CLI exit-code contract:
/// configuration problems, shape mismatches, bad values, unusable data,
/// and I/O or file-format trouble.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (layer sizes, learning rate, counts, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Dimension mismatch between tensors or vectors.
    #[error("shape error: {0}")]
    Shape(String),

    /// A value failed a contract check (non-binary target, p out of range, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// The data cannot support the requested operation (empty set, no
    /// minable triplet, probe without a gallery match, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file did not match its expected format.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
