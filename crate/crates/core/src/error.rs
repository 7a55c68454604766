use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Structural or range validation failure on inputs.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The tuple space is too large for enumeration-based operations.
    #[error("enumeration infeasible: |X| = {space_size:.3e} exceeds budget {budget:.3e}")]
    EnumerationInfeasible { space_size: f64, budget: f64 },

    /// The exact dual solver left the configured parameter-norm region.
    #[error("exact solver diverged at iteration {iteration}: {reason}")]
    ExactDivergence { iteration: usize, reason: String },

    /// The stochastic solver produced non-finite parameters.
    #[error("pcd solver diverged at iteration {iteration}")]
    PcdDivergence {
        iteration: usize,
        /// Mean relative error history up to the failure point.
        trace: Vec<f64>,
    },

    /// A metric was requested on data where it is undefined.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Text-format parse failure with location information.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
