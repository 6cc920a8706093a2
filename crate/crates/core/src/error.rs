use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown point id {0} for precomputed kernel")]
    UnknownIndex(String),

    #[error("no Lipschitz constant for {0} kernel")]
    NoLipschitzConstant(&'static str),

    #[error("index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical degeneracy at t={t}: {what} (value {value:e})")]
    Degenerate { t: usize, what: String, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input{}: {msg}", .path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Parse { path: Option<PathBuf>, msg: String },

    #[error("{0}")]
    Unsupported(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(path: Option<&std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.map(|p| p.to_path_buf()),
            msg: msg.into(),
        }
    }

    pub(crate) fn degenerate(t: usize, what: impl Into<String>, value: f64) -> Self {
        Error::Degenerate {
            t,
            what: what.into(),
            value,
        }
    }

    /// True for errors that come from a bad configuration or input file
    /// rather than from the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::DimensionMismatch { .. }
                | Error::UnknownIndex(_)
                | Error::NoLipschitzConstant(_)
                | Error::Unsupported(_)
                | Error::Capacity(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
