use std::path::PathBuf;

/// Failure of a harness operation. The variants map onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(divest_core::Error),
    #[error("run {index} (seed {seed}) failed: {source}")]
    Run {
        index: usize,
        seed: u64,
        source: divest_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
}

impl HarnessError {
    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) | HarnessError::Run { .. } => 3,
            HarnessError::Io { .. } | HarnessError::Data { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        HarnessError::Data {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl From<divest_core::Error> for HarnessError {
    fn from(e: divest_core::Error) -> Self {
        match e {
            divest_core::Error::InvalidParams(msg) => HarnessError::Config(msg.to_string()),
            e => HarnessError::Numerical(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
