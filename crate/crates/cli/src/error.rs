use std::fmt;
use std::process::ExitCode;

use pde_attention::Error as CoreError;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad input or unusable output location: exit 2.
    Config(String),
    /// At least one verification report failed: exit 1.
    Verification(Vec<String>),
    /// Numerical divergence: exit 3.
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "error: {m}"),
            CliError::Verification(names) => write!(f, "verification failed: {}", names.join(", ")),
            CliError::Divergence(m) => write!(f, "diverged: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_divergence() || matches!(e, CoreError::DegenerateField { .. }) {
            CliError::Divergence(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("I/O: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("JSON: {e}"))
    }
}
