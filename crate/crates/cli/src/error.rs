use shiftlab::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// 2 for violated model assumptions, 3 for degenerate statistics, 1
    /// otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::NoMinimum(_)) => 2,
            CliError::Core(Error::DegenerateFit(_)) | CliError::Core(Error::UndefinedReweighting(_)) => 3,
            _ => 1,
        }
    }
}
