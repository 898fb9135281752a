use thiserror::Error;

/// CLI failures, split by exit code: 1 for validation or assertion
/// failures, 2 for I/O and parse errors.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{} violation(s):\n  {}", .0.len(), .0.join("\n  "))]
    Violations(Vec<String>),

    #[error("check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Core(#[from] qcat::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                qcat::Error::Parse(_) | qcat::Error::Csv(_) | qcat::Error::Io(_) => 2,
                _ => 1,
            },
            CliError::Invalid(_) | CliError::Violations(_) | CliError::Check(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}
