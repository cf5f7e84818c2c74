use std::fmt;

/// CLI failure classes mapped onto exit codes: configuration problems exit
/// with 2, computation failures with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Compute(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }

    /// Computation failure at a labelled pipeline stage.
    pub fn stage(stage: &str, err: impl fmt::Display) -> Self {
        CliError::Compute(format!("[{stage}] {err}"))
    }
}

impl From<turnpike_core::Error> for CliError {
    fn from(e: turnpike_core::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Compute(format!("io: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
