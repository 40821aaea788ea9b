use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("fixture {0} failed: {1}")]
    FixtureFailed(String, String),

    #[error(transparent)]
    Model(#[from] cmc_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for model or verdict failures, 2 for usage, parse and IO problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(_) | CliError::FixtureFailed(..) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
