use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward called on non-scalar tensor of shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("batch norm `{0}` used in inference mode before any statistics were collected")]
    UninitializedStatistics(String),

    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("unknown modulation `{name}`; valid classes: {valid}")]
    UnknownModulation { name: String, valid: String },

    #[error("not a {format} file")]
    BadMagic { format: &'static str },

    #[error("unsupported {format} version {found} (supported: {supported})")]
    UnsupportedVersion {
        format: &'static str,
        found: u16,
        supported: u16,
    },

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: String,
        expected: u64,
        actual: u64,
    },

    #[error("malformed {format} file: {detail}")]
    Malformed {
        format: &'static str,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Path { path, source }
    }

    /// True for errors caused by unreadable or inconsistent data files.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::UnsupportedVersion { .. }
                | Error::Truncated { .. }
                | Error::Malformed { .. }
                | Error::Io(_)
                | Error::Path { .. }
        )
    }

    pub fn is_numeric_error(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
