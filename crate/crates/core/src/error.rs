use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A CSV or config input could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate ticker `{0}`")]
    DuplicateTicker(String),

    #[error("insufficient data: need at least {required} rows, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    /// One or more invariants of an input failed. Every violation is listed.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// The budget bounds cannot be met together with the full-investment constraint.
    #[error("infeasible partition: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// Exhaustive enumeration refused because it would exceed the cap.
    #[error("exhaustive search needs {needed} subsets, cap is {cap}")]
    CapExceeded { needed: u128, cap: u128 },

    /// The unaccelerated solver observed an objective increase.
    #[error(
        "descent violated at stage {stage}, iteration {iteration}: {before:.17e} -> {after:.17e}"
    )]
    DescentViolation {
        stage: usize,
        iteration: usize,
        before: f64,
        after: f64,
    },

    /// The linear program behind a restricted CVaR solve failed.
    #[error("linear program failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(vec![msg.into()])
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DuplicateTicker(_)
                | Error::InsufficientData { .. }
                | Error::Validation(_)
                | Error::Infeasible(_)
                | Error::Dimension { .. }
                | Error::CapExceeded { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
