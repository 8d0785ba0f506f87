use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("covariance is not positive definite: eigenvalue {value:e} at index {index}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("column {0} of the design matrix is identically zero")]
    ZeroColumn(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate ground metric: {0}")]
    DegenerateMetric(String),

    #[error("non-finite Sinkhorn scalings after {iterations} iterations; try a larger epsilon")]
    NumericalBlowup { iterations: usize },

    #[error("histograms have unequal mass ({left} vs {right}); normalize both inputs first")]
    UnbalancedMass { left: f64, right: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("unbounded coordinate subproblem at index {0}")]
    Unbounded(usize),

    #[error("source space is not connected ({reached} of {total} vertices reachable)")]
    Disconnected { reached: usize, total: usize },

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
