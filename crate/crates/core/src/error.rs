use thiserror::Error;

/// Errors raised across the emulator, sampler, and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix not positive definite after jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("MCMC initialization failed: {0}")]
    Initialization(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that come from the numbers rather than from the request.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Factorization { .. }
                | Error::Numerical(_)
                | Error::Degenerate(_)
                | Error::Initialization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
