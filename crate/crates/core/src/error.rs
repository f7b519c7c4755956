use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("memory length {memory} exceeds the enumeration guard of {limit}")]
    MemoryGuard { memory: u32, limit: u32 },

    #[error("{what} exceeds resource guard ({limit})")]
    ResourceGuard { what: String, limit: usize },

    #[error("mismatched memory lengths: {0} vs {1}")]
    MemoryMismatch(u32, u32),

    #[error("index {index} out of range {lo}..={hi}")]
    OutOfRange { index: usize, lo: usize, hi: usize },

    #[error("chain has {0} recurrent classes; stationary distribution is not unique")]
    Reducible(usize),

    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
