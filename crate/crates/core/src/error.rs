use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sensor index {index} out of range for a network of {count} sensors")]
    SensorIndex { index: usize, count: usize },

    #[error("fixed draw rule under the unauthorized hypothesis needs a drone power")]
    MissingUnauthorizedPower,

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("statistic must be non-negative, got {0}")]
    NegativeStatistic(f64),

    #[error("detector has no scalar sufficient statistic (heterogeneous sensor gains)")]
    NotScalar,

    #[error("expected {expected} sensor inputs, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(
        "infeasible constraints alpha={alpha}, beta={beta}: best achievable Pr(H1|H1) is \
         {best_p11:.6} at the alpha bound"
    )]
    Infeasible { alpha: f64, beta: f64, best_p11: f64 },

    #[error("threshold search did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
