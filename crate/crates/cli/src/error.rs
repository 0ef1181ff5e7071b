use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("compute error: {0}")]
    Compute(#[from] netspde::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation { path: path.into(), message: message.into() }
    }

    /// Process exit status: 2 config, 3 validation, 4 compute or output.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation { .. } => 3,
            CliError::Compute(_) | CliError::Output(_) => 4,
        }
    }
}
