use thiserror::Error;

/// Errors produced by the simulator and analytics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration or argument invariant failed. `path` names the offending field.
    #[error("invalid value at `{path}`: {reason}")]
    Validation { path: String, reason: String },

    /// A numeric argument fell outside the domain of a function.
    #[error("domain error in {func}: {reason}")]
    Domain { func: &'static str, reason: String },

    /// No hosted model can meet the task's tolerance within its remaining slack.
    #[error("infeasible task: {0}")]
    Infeasible(String),

    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Least squares had no unique solution on the named segment.
    #[error("degenerate least-squares fit on {segment} segment")]
    DegenerateFit { segment: &'static str },

    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("{func} did not converge after {iterations} iterations")]
    NonConvergence { func: &'static str, iterations: usize },

    /// A dispatched allocation broke a deadline or tolerance constraint.
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(func: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            func,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
