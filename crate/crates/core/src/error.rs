use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request exceeds a configured capability (degree cap, dimension, memory guard).
    #[error("capability error: {0}")]
    Capability(String),

    /// The discretization cannot support the requested operation.
    #[error("grid error: {0}")]
    Grid(String),

    /// Not enough usable samples for a fit or a norm estimate.
    #[error("insufficient data: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn grid(msg: impl Into<String>) -> Self {
        Error::Grid(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be positive and finite, got {t}")))
    }
}
