use thiserror::Error;

/// Front-end failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Report cells with no matching ledger records.
    #[error("report inputs incomplete; missing cells:\n  {}", .0.join("\n  "))]
    Incomplete(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Incomplete(_) => 4,
        }
    }

    /// Classifies a library error raised while loading or splitting data.
    pub fn data(e: hici_core::Error) -> Self {
        match e {
            hici_core::Error::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }

    /// Classifies a library error raised during training or evaluation.
    pub fn training(e: hici_core::Error) -> Self {
        use hici_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } | E::Numeric(_) => CliError::Numeric(e.to_string()),
            E::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Data(format!("{context}: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
