use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("cannot parse run configuration: {0}")]
    ConfigSyntax(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] mcld_models::Error),
    #[error(transparent)]
    Loss(#[from] mcld_core::LossError),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("cannot evaluate an empty split")]
    EmptySplit,
    #[error("metrics output: {0}")]
    Metrics(String),
}

impl TrainError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

impl From<csv::Error> for TrainError {
    fn from(e: csv::Error) -> Self {
        Self::Metrics(e.to_string())
    }
}

impl From<serde_json::Error> for TrainError {
    fn from(e: serde_json::Error) -> Self {
        Self::Metrics(e.to_string())
    }
}
