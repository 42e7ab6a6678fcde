//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, GplmError>;

/// Everything that can go wrong while specifying or fitting a model.
#[derive(Error, Debug, Clone)]
pub enum GplmError {
    #[error("domain error in {what}: value {value} is outside the valid range")]
    Domain { what: &'static str, value: f64 },

    #[error("degenerate variance at mean {mu}: V(mu) must be positive")]
    DegenerateVariance { mu: f64 },

    #[error("precision failure: {0}")]
    Precision(String),

    #[error("degenerate observation y = {y} for {family}: score root not bracketed")]
    DegenerateObservation { y: f64, family: String },

    #[error("empty smoothing window at t = {t} with bandwidth h = {h}")]
    EmptyWindow { t: f64, h: f64 },

    #[error("ill-conditioned local derivative at t = {t}: denominator below threshold")]
    IllConditionedDerivative { t: f64 },

    #[error("design error: {0}")]
    Design(String),

    #[error("singular matrix (1-norm condition estimate {cond:.3e})")]
    SingularMatrix { cond: f64 },

    #[error("optimization failure: {0}")]
    OptimizationFailure(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("simulation failure: {0}")]
    Simulation(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GplmError {
    fn from(e: std::io::Error) -> Self {
        GplmError::Io(e.to_string())
    }
}
