use thiserror::Error;

use crate::randomness::ThetaIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Model, benchmark or compiler configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A coefficient produced a non-finite value at a sampled point.
    #[error("coefficient `{coefficient}` is not finite at {point:?}")]
    NonFiniteCoefficient {
        coefficient: &'static str,
        point: Vec<f64>,
    },

    /// The Euler-Maruyama state left the finite range.
    #[error("simulation diverged on theta {theta} in segment {segment}")]
    Simulation { theta: ThetaIndex, segment: usize },

    /// The compiled network would exceed the configured parameter ceiling.
    #[error("predicted parameter count {predicted} exceeds ceiling {ceiling}")]
    ResourceLimit { predicted: u128, ceiling: u128 },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
