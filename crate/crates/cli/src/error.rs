use std::path::PathBuf;

use dfe_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}: does not exist", .0.display())]
    MissingPath(PathBuf),

    #[error("gradient check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 0 success, 1 failed gradient check, 2 configuration or input error,
    /// 3 non-finite training loss, 4 tracking failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingPath(_) => 2,
            CliError::CheckFailed(_) => 1,
            CliError::Core(e) => match e {
                CoreError::NonFiniteLoss { .. } => 3,
                CoreError::InvalidReference { .. }
                | CoreError::MissingGroundTruth(_)
                | CoreError::EmptyField
                | CoreError::NoNeighborhood { .. } => 4,
                _ => 2,
            },
        }
    }
}
