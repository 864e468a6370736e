use thiserror::Error;

/// Failures of a CLI verb. Each maps to a stable process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[from] chanceopt_core::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Output(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
