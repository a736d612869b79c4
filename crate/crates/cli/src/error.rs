use std::io;
use std::path::Path;

use risjam_core::scenario::ScenarioError;
use serde_json::json;
use thiserror::Error;

/// Exit status for invalid input.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for failures after the input was accepted.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected input; `path` locates the offending field when known.
    #[error("{}{message}", path.as_deref().map(|p| format!("{p}: ")).unwrap_or_default())]
    Validation { path: Option<String>, message: String },
    #[error("runs are not comparable: {0}")]
    ShapeMismatch(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(path: Option<&str>, message: impl Into<String>) -> Self {
        CliError::Validation { path: path.map(str::to_owned), message: message.into() }
    }

    pub fn io(context: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io { context: context.as_ref().display().to_string(), source }
    }

    /// Maps errors raised while checking a scenario against its roster.
    pub fn from_validation(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid { field, reason } => CliError::Validation { path: Some(field), message: reason },
            other => CliError::Validation { path: None, message: other.to_string() },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::ShapeMismatch(_) => EXIT_VALIDATION,
            CliError::Io { .. } | CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation { .. } => "validation",
            CliError::ShapeMismatch(_) => "shape-mismatch",
            CliError::Io { .. } => "io",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let path = match self {
            CliError::Validation { path, .. } => path.clone(),
            _ => None,
        };
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "path": path,
                "message": self.to_string(),
            }
        })
    }
}
