use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside the domain {domain}")]
    Domain { what: &'static str, value: f64, domain: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),

    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {error:e})")]
    Quadrature { tolerance: f64, error: f64 },

    #[error("integral diverges: {0}")]
    Divergence(String),

    #[error("ODE integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("non-finite flow state at t = {t}")]
    NonFinite { t: f64 },

    #[error("all {n_paths} paths failed to produce a valid weight")]
    AllPathsFailed { n_paths: u64 },

    #[error("only {n_valid} valid paths at t = {t}; at least 2 are required")]
    InsufficientValidPaths { t: f64, n_valid: u64 },

    #[error("malformed measure table: {0}")]
    Table(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
