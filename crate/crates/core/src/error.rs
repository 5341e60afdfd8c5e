use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and detectors.
///
/// Numerical trouble inside the iterative detectors (variance underflow,
/// degenerate splits) is never reported here; it is counted in
/// [`crate::NumericalEvents`] instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("cannot assign {requested} distinct spreading sequences of length {length}: only {available} (root, shift) pairs exist")]
    Capacity {
        requested: usize,
        available: usize,
        length: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
