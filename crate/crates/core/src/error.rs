use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed configuration or arguments that violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear system or decomposition could not be carried out reliably.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// TVAR coefficient functions violate the stability margin.
    #[error("unstable autoregression: spectral radius {radius:.6} at t = {t:.4}")]
    Unstable { radius: f64, t: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
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

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures caused by the numbers rather than by the request.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::Unstable { .. } | Error::Domain(_) => true,
            Error::Replicate { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
