use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes or an invalid model/training configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller passed arguments outside an operation's contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// A random draw could not produce a valid sample; the caller may retry.
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("data error: {0}")]
    Data(String),
    /// Non-finite loss or gradient during optimization.
    #[error("training error: {0}")]
    Training(String),
    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code: 3 for runtime training failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Training(_) => 3,
            _ => 2,
        }
    }
}
