use std::fmt;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A parameter or configuration value is out of its valid range.
    InvalidArgument(String),
    /// Input data failed validation (out-of-domain value, empty batch, ...).
    InvalidData(String),
    /// A numerical degeneracy was hit (zero denominator, log of zero, ...).
    Degenerate(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::Degenerate(msg) => write!(f, "numerical degeneracy: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
