use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("schema error in {path}: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("dataset is empty after preprocessing")]
    EmptyDataset,

    #[error("config error ({key}): {msg}")]
    Config { key: String, msg: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Config { .. } | Error::Dimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
