use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("point is outside the domain: {0}")]
    OutsideDomain(String),

    #[error("coincident points: estimator requires x != y")]
    CoincidentPoints,

    #[error("quadrature did not converge: estimated error {error:e} (target {target:e})")]
    Quadrature { error: f64, target: f64 },

    #[error("geometry search failed: {0}")]
    Geometry(String),

    #[error("envelope violated at radius {radius:e}: value {value:e} > bound {bound:e}")]
    EnvelopeViolation { radius: f64, value: f64, bound: f64 },

    #[error("series tolerance {requested:e} unreachable with n_max = {n_max} (tail bound {tail:e})")]
    SeriesTail { requested: f64, n_max: usize, tail: f64 },

    #[error("aliasing detected: boundary magnitude {boundary:e} exceeds {limit:e}")]
    Aliasing { boundary: f64, limit: f64 },

    #[error("step budget of {0} exceeded")]
    StepBudget(usize),

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
