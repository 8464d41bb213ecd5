use thiserror::Error;

/// Errors raised by the pricers, the calibrators and the CLI shell.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user configuration or bounds.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated a function contract (shape mismatch, wrong grid, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A requested point lies outside the discretised domain.
    #[error("out of range: {0}")]
    Range(String),

    /// The cost metric is undefined for the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Monte Carlo path produced a non-finite state.
    #[error("simulation error on path {path} at step {step}: {message}")]
    Simulation {
        path: usize,
        step: usize,
        message: String,
    },

    /// PDE or adjoint solve failed.
    #[error("numerical error at time level {level}: {message}")]
    Numerical { level: usize, message: String },

    /// Calibration failure, wrapping the solver error with iterate context.
    #[error("calibration failed at iteration {iteration}: {source}")]
    Calibration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed input file.
    #[error("parse error in {file} at row {row}, column \"{column}\": {message}")]
    Parse {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn numerical(level: usize, message: impl Into<String>) -> Self {
        Error::Numerical {
            level,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Simulation { .. } | Error::Numerical { .. } => true,
            Error::Calibration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
