use serde::Serialize;

/// Failure reported on stderr as JSON. `step` is set when the failure
/// happened inside a pipeline run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<String>,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> CliError {
        CliError {
            code: code.to_string(),
            message: message.into(),
            step: None,
        }
    }

    pub fn at_step(mut self, step: &str) -> CliError {
        self.step = Some(step.to_string());
        self
    }
}

impl From<nrv_core::Error> for CliError {
    fn from(e: nrv_core::Error) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io_error", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("invalid_json", e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
