use lll_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        HarnessError::Format {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 bad usage, 3 I/O, 4 solver non-convergence,
    /// 5 dimension mismatch, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } | HarnessError::Format { .. } => 3,
            HarnessError::Core(CoreError::NonConvergence { .. }) => 4,
            HarnessError::Core(CoreError::DimensionMismatch { .. }) => 5,
            HarnessError::Core(_) => 1,
        }
    }
}

pub type HarnessResult<T> = Result<T, HarnessError>;
