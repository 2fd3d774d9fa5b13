use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// validation-type failures (bad input, bad config, domain violations)
/// versus numerical failures (non-convergence, degenerate linear algebra).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    /// Habit-adjusted consumption (or another level that must stay positive)
    /// is nonpositive at some period.
    #[error("domain error at period {period}: {what}")]
    Domain { what: String, period: usize },

    #[error("{what} did not converge after {iterations} iterations (last sup-norm change {last_sup:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        last_sup: f64,
    },

    #[error("agent capital left the grid at period {period}: {value:.6} outside [{lower}, {upper}]")]
    GridExit {
        period: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("numerical error{}: {what}", period.map(|p| format!(" at period {p}")).unwrap_or_default())]
    Numerical { what: String, period: Option<usize> },

    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            what: msg.into(),
            period: None,
        }
    }

    /// True for failures that stem from invalid inputs rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Domain { .. }
                | Error::Config { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
