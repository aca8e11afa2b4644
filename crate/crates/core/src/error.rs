use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    /// A warp that cannot be represented by a strictly positive derivative.
    #[error("invalid element: {0}")]
    InvalidElement(String),

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    /// Quadrature did not reach its tolerance; `estimate` is still returned.
    #[error("quadrature accuracy not reached: estimate {estimate}, error estimate {error:e}")]
    Accuracy { estimate: f64, error: f64 },

    #[error("sampling failure: {0}")]
    Sampling(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("ingestion failure: {0}")]
    Ingestion(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("period {label}: {source}")]
    Period {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Innermost error, with replicate/period wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Replicate { source, .. } | Error::Period { source, .. } => source.root(),
            e => e,
        }
    }
}
