use std::io;

/// Errors raised anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes, widths, or hyperparameters that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed inputs: label values, ids out of range, length mismatches.
    #[error("data error: {0}")]
    Data(String),
    /// An operation was called in the wrong order (e.g. backward without forward).
    #[error("state error: {0}")]
    State(String),
    /// A training window overlaps data already consumed by the lineage.
    #[error("schedule error: {0}")]
    Schedule(String),
    /// Look-ahead evaluation touched data the model has already trained on.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Binary container could not be decoded.
    #[error("format error: {0}")]
    Format(String),
    /// Two runs cannot be compared.
    #[error("comparison error: {0}")]
    Comparison(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<io::Error> for Error {
    fn from(source: io::Error) -> Self {
        Error::Io {
            path: "<stream>".to_string(),
            source,
        }
    }
}
