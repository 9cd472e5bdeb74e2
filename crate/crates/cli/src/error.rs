use std::path::PathBuf;

use mcld_models::Error as ModelError;
use mcld_report::ReportError;
use mcld_train::TrainError;
use mcld_transfer::TransferError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures grouped by what the user has to fix. The process exit code
/// follows the group.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("output: {0}")]
    Output(String),
    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Config(_) => 3,
            Self::Input(_) => 4,
            Self::Output(_) => 5,
            Self::Run(_) => 6,
        }
    }

    pub fn write(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::Output(format!("{}: {e}", path.display()))
    }
}

fn io_error(path: PathBuf, source: std::io::Error) -> CliError {
    if source.kind() == std::io::ErrorKind::NotFound {
        CliError::Input(format!("{}: {source}", path.display()))
    } else {
        CliError::Output(format!("{}: {source}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { path, source } => io_error(path, source),
            ModelError::InvalidSpec(_) | ModelError::UnknownArchitecture(_) => Self::Config(e.to_string()),
            ModelError::Format(_) | ModelError::LabelOutOfRange { .. } | ModelError::Shape(_) => {
                Self::Input(e.to_string())
            }
            ModelError::Frozen => Self::Run(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Io { path, source } => io_error(path, source),
            TrainError::Config(_) | TrainError::ConfigSyntax(_) => Self::Config(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Checkpoint(_) | TrainError::Incompatible(_) => Self::Input(e.to_string()),
            TrainError::Loss(_) | TrainError::Diverged { .. } | TrainError::EmptySplit => Self::Run(e.to_string()),
            TrainError::Metrics(_) => Self::Output(e.to_string()),
        }
    }
}

impl From<TransferError> for CliError {
    fn from(e: TransferError) -> Self {
        match e {
            TransferError::Io { path, source } => io_error(path, source),
            TransferError::Model(m) => m.into(),
            TransferError::Train(t) => t.into(),
            TransferError::Format(_) | TransferError::Dimension(_) => Self::Input(e.to_string()),
            TransferError::Empty(_) => Self::Run(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { path, source } => io_error(path, source),
            ReportError::Sidecar(_) | ReportError::MissingTiming(_) | ReportError::Dimension(_) => {
                Self::Input(e.to_string())
            }
            ReportError::Degenerate(_) => Self::Run(e.to_string()),
            ReportError::Image(_) => Self::Output(e.to_string()),
        }
    }
}
