use thiserror::Error;

/// Which half of the divergence estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Gold,
    Target,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Gold => f.write_str("gold"),
            Side::Target => f.write_str("target"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("all particle weights are zero at step {step}")]
    DegenerateWeights { step: usize },

    /// A group of auxiliary weights averaged to zero, so the log-ratio is infinite.
    #[error("infinite divergence estimate from {side} run {run}")]
    InfiniteEstimate { side: Side, run: usize },

    #[error("enumeration needs {terms} terms, budget is {budget}")]
    TooLarge { terms: u128, budget: u128 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
