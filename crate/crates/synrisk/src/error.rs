use std::path::PathBuf;

use serde::Serialize;

/// Errors surfaced by the command-line tool.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration is invalid: {}", .violations.join("; "))]
    Config { violations: Vec<String> },
    #[error("{}: line {line}, column {column}: {message}", .path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{}: {message}", .path.display())]
    Input { path: PathBuf, message: String },
    #[error("{operation}: {source}")]
    Core {
        operation: &'static str,
        #[source]
        source: synrisk_core::Error,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Machine-readable error record printed on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub module: &'static str,
    pub operation: Option<&'static str>,
    pub path: Option<String>,
    pub message: String,
    pub violations: Vec<String>,
    pub exit_code: i32,
}

impl CliError {
    pub fn core<E: Into<synrisk_core::Error>>(operation: &'static str) -> impl FnOnce(E) -> CliError {
        move |e| CliError::Core { operation, source: e.into() }
    }

    pub fn input(path: impl Into<PathBuf>, message: impl ToString) -> CliError {
        CliError::Input { path: path.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 for configuration and input problems, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Parse { .. } | CliError::Input { .. } => 2,
            CliError::Core { .. } | CliError::Io { .. } => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (kind, module, operation, path, violations) = match self {
            CliError::Config { violations } => ("config", "cli_report", None, None, violations.clone()),
            CliError::Parse { path, .. } => ("parse", "cli_report", None, Some(path.display().to_string()), vec![]),
            CliError::Input { path, .. } => ("input", "core_data", None, Some(path.display().to_string()), vec![]),
            CliError::Core { operation, source } => ("runtime", source.module(), Some(*operation), None, vec![]),
            CliError::Io { path, .. } => ("io", "cli_report", None, Some(path.display().to_string()), vec![]),
        };
        ErrorRecord { kind, module, operation, path, message: self.to_string(), violations, exit_code: self.exit_code() }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
