use thiserror::Error;

/// Errors produced by the design library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is not Hermitian (max deviation {max_deviation:.3e})")]
    NotHermitian { max_deviation: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("QoS constraints are infeasible: {0}")]
    QosInfeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
