use thiserror::Error;

/// Failures of a command, split by exit status: bad input exits with 1,
/// everything that goes wrong while running exits with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}

impl From<mwe_core::Error> for CliError {
    fn from(err: mwe_core::Error) -> Self {
        use mwe_core::Error as E;
        match err {
            E::Parse { path, line, message } => CliError::Parse { path, line, message },
            E::Shape(_)
            | E::InvalidParameter(_)
            | E::ZeroColumn(_)
            | E::DegenerateMetric(_)
            | E::UnbalancedMass { .. }
            | E::Disconnected { .. }
            | E::EmptySupport(_)
            | E::NotPositiveDefinite { .. } => CliError::Validation(err.to_string()),
            E::NumericalBlowup { .. } | E::Singular(_) | E::Unbounded(_) | E::Io(_) => {
                CliError::Runtime(err.to_string())
            }
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Runtime(format!("csv: {err}"))
    }
}
