use serde_json::json;
use thiserror::Error;

/// Errors surfaced by the command-line front end.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Domain(#[from] cavity_core::Error),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl Into<String>, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.into(), message: err.to_string() }
    }

    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        use cavity_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Domain(e) => match e {
                E::Parameter(_) => "parameter",
                E::Unsupported(_) => "unsupported",
                E::DegeneratePopulation { .. } => "degenerate_population",
                E::DegenerateMessage { .. } => "degenerate_message",
                E::Sample { .. } => "sample",
                E::Budget { .. } => "budget",
                E::InfeasibleTruth(_) => "infeasible_truth",
                E::Threshold(_) => "threshold",
            },
        }
    }

    /// `{"error": {"kind": ..., "message": ...}}`
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
