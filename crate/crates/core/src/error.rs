use thiserror::Error;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {x} lies outside the domain [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrand returned NaN at x = {x}")]
    NanIntegrand { x: f64 },

    #[error("quadrature on [{a}, {b}] did not reach tolerance (error estimate {err:e})")]
    NotConverged { a: f64, b: f64, err: f64 },

    #[error("integrability of w^(-1/(p-1)) at z = {z} is numerically indeterminate (alpha/(p-1) = {ratio:.4})")]
    Indeterminate { z: f64, ratio: f64 },

    #[error("local exponent estimation failed at z = {z}: {reason}")]
    Estimation { z: f64, reason: String },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("x = {x} does not lie on an outer branch of the auxiliary weight")]
    Branch { x: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
