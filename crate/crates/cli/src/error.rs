use std::path::PathBuf;

/// CLI failure, mapped to a process exit code by [`CliError::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(subnyq_core::Error),

    #[error("column `{0}` not found in input")]
    MissingColumn(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error("estimator failed: {0}")]
    Estimator(subnyq_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for anything the caller can fix in flags, configs or inputs.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_)
            | CliError::Config { .. }
            | CliError::InvalidConfig(_)
            | CliError::MissingColumn(_)
            | CliError::Plot(_) => 2,
            CliError::Estimator(_) | CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
