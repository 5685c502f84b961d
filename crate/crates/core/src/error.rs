use thiserror::Error;

/// Errors produced anywhere in the decision stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("steering angle {0} rad is outside the kinematic model domain")]
    SteeringDomain(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("projection error: point ({x:.3}, {y:.3}) is {distance:.3} m from lane `{lane}`")]
    Projection {
        x: f64,
        y: f64,
        distance: f64,
        lane: String,
    },

    #[error("localization error: {0}")]
    Localization(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
