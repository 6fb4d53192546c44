//! Crate-wide error type.

use std::fmt;
use std::io;

/// Errors produced by the stereo pipeline and its file formats.
#[derive(Debug)]
pub enum Error {
    /// Malformed input file (bad magic, truncated payload, unparsable field).
    Format(String),
    /// Raster dimensions are empty, mismatched, or too small for an operation.
    Dimension(String),
    /// A parameter is outside its valid range.
    Parameter(String),
    /// Not enough samples to run an estimator.
    InsufficientData(String),
    /// RANSAC consensus smaller than the configured minimum.
    NoConsensus { found: usize, required: usize },
    /// A fit is rank-deficient or otherwise degenerate.
    Degenerate(String),
    /// A road model that cannot be applied (e.g. negative row shift).
    InvalidModel(String),
    /// Scene geometry that cannot be rendered.
    Scene(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Parameter(m) => write!(f, "parameter error: {m}"),
            Error::InsufficientData(m) => write!(f, "insufficient data: {m}"),
            Error::NoConsensus { found, required } => {
                write!(f, "no consensus: {found} inliers, {required} required")
            }
            Error::Degenerate(m) => write!(f, "degenerate fit: {m}"),
            Error::InvalidModel(m) => write!(f, "invalid model: {m}"),
            Error::Scene(m) => write!(f, "scene error: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
