use thiserror::Error;

/// Errors produced by the deconvolution library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    /// A 2x2 table with an empty cell; the logistic MLE does not exist.
    #[error("complete separation: {0}; use fisher_exact_p instead")]
    Separation(String),

    #[error("initialisation error: non-finite log-likelihood at (patient, feature) pairs {0:?}")]
    Initialisation(Vec<(usize, usize)>),

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    QuadratureNonConvergence { estimate: f64, error_bound: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
