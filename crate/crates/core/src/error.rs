use std::path::PathBuf;

use thiserror::Error;

/// A single problem found while reading or validating a configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted key path, e.g. `contract.alpha_coll`.
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric guard: {0}")]
    Numeric(String),

    #[error("configuration invalid:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("{solver} did not converge after {iterations} iterations (trace: {trace:?})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config(vec![ConfigIssue {
            key: key.into(),
            message: message.into(),
        }])
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::NonConvergence { .. } => 3,
            Error::Io { .. } => 4,
            Error::Domain(_) | Error::Model(_) | Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
