use std::fmt;

use forgefuse_core::baselines::BaselineError;
use forgefuse_core::deep_linear::LinearError;
use forgefuse_core::forget_metrics::MetricsError;
use forgefuse_core::knowledge_fusion::FusionError;
use forgefuse_core::spectral_overlap::SpectralError;
use forgefuse_core::LogError;
use serde_json::json;

/// Exit status for bad flags, files or configurations.
pub const EXIT_INVALID_INPUT: u8 = 2;
/// Exit status for failures while running or writing results.
pub const EXIT_OPERATIONAL: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub field: Option<String>,
    pub exit_code: u8,
}

impl CliError {
    pub fn invalid(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
            field: None,
            exit_code: EXIT_INVALID_INPUT,
        }
    }

    pub fn operational(kind: &str, message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_OPERATIONAL,
            ..Self::invalid(kind, message)
        }
    }

    pub fn with_field(mut self, field: Option<&str>) -> Self {
        self.field = field.map(str::to_string);
        self
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind, "message": self.message, "exit_code": self.exit_code });
        if let Some(f) = &self.field {
            v["field"] = json!(f);
        }
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Errors from reading an input log. A missing or unreadable input counts as
/// invalid input, not as an operational failure.
pub fn log_input(path: &std::path::Path, e: LogError) -> CliError {
    CliError::invalid(e.kind(), format!("{}: {e}", path.display())).with_field(e.field())
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::invalid(e.kind(), e.to_string())
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        CliError::invalid(e.kind(), e.to_string())
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        CliError::invalid(e.kind(), e.to_string())
    }
}

impl From<LinearError> for CliError {
    fn from(e: LinearError) -> Self {
        match e {
            LinearError::Diverged { .. } => CliError::operational(e.kind(), e.to_string()),
            _ => CliError::invalid(e.kind(), e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Linear(inner) => inner.into(),
            _ => CliError::invalid(e.kind(), e.to_string()),
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        CliError::invalid(e.kind(), e.to_string()).with_field(e.field())
    }
}
