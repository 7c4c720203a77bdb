use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action bins (steer {steer_bin}, speed {speed_bin})")]
    InvalidAction { steer_bin: usize, speed_bin: usize },

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("episode already terminated")]
    EpisodeTerminated,

    #[error("virtual offset {offset:.3} m exceeds path half-width {half_width:.3} m")]
    OffsetOutOfRange { offset: f64, half_width: f64 },

    #[error("observation has dimension {got}, policy expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty dataset for {0}")]
    EmptyDataset(String),

    #[error("no samples collected for scenario {0}")]
    MissingScenario(crate::ScenarioId),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("backtrack called on an empty queue")]
    EmptyQueue,

    #[error("protocol {0} evaluates {1}, not {2}")]
    WrongProtocol(&'static str, &'static str, crate::ScenarioId),

    #[error("experiment record needs at least {needed} iterations, has {got}")]
    TooFewIterations { needed: usize, got: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("session log: {0}")]
    SessionLog(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl Error {
    /// Prefixes the field path of a config error with `section`.
    pub fn within(self, section: &str) -> Self {
        match self {
            Error::Config { path, message } => Error::Config {
                path: format!("{section}.{path}"),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
