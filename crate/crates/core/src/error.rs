use thiserror::Error;

use crate::data::CurveKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation in {context}: {message}")]
    Schema { context: String, message: String },

    #[error("duplicate curve key {0}")]
    DuplicateKey(CurveKey),

    #[error("curve {key}: {field} is not strictly increasing")]
    NonMonotone { key: CurveKey, field: &'static str },

    #[error("unknown curve key {0}")]
    UnknownKey(CurveKey),

    #[error("curve {key} is missing meta field `{field}`")]
    MissingMeta { key: CurveKey, field: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training targets are constant; cannot z-score")]
    ConstantTarget,

    #[error("kernel matrix is ill-conditioned (factorization failed at jitter {jitter:e})")]
    IllConditioned { jitter: f64 },

    #[error("all {0} optimizer restarts failed")]
    AllRestartsFailed(usize),

    #[error("all {0} least-squares starts diverged")]
    AllStartsDiverged(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no frontier points inside [{lo:e}, {hi:e}]")]
    EmptyFrontier { lo: f64, hi: f64 },

    #[error("query pool is empty")]
    EmptyPool,

    #[error("run {run} failed: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::IllConditioned { .. }
            | Error::AllRestartsFailed(_)
            | Error::AllStartsDiverged(_)
            | Error::Domain(_)
            | Error::EmptyFrontier { .. } => ErrorClass::Numeric,
            Error::RunFailed { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
