use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A run configuration is inconsistent (e.g. violates the diffusion stability bound).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical procedure failed or produced a meaningless result.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Nonlinear fit did not converge; carries the residual norm after each iteration.
    #[error("fit failed after {iterations} iterations (residual {residual:.6e})")]
    FitFailed {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    /// Input data could not be used (malformed files, too many bad lines, empty series).
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
