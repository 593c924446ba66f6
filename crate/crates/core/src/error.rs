use thiserror::Error;

/// Errors raised by the detection, estimation and prediction routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter point or model parameter lies outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A signal support or grid does not fit inside the measurement.
    #[error("range error: {0}")]
    Range(String),
    /// Curvature matrices are singular or not positive definite.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Invalid grid, prior, or experiment configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
