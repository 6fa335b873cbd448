use thiserror::Error;

/// Errors produced by the routine-signature pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing data: {0}")]
    MissingData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("model sweep failed: {0}")]
    SweepFailed(String),

    #[error("segment contains no labelled days")]
    EmptySegment,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("transition matrices share no defined rows")]
    Incomparable,

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    Rank(Vec<String>),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid value at `{path}`: {reason}")]
    InvalidSpec { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
