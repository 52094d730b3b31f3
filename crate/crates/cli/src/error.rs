use std::path::PathBuf;

use serde::Serialize;

/// Failure of a CLI command, classified by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("I/O error at {path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    /// One-line JSON for stderr, so wrappers can dispatch on `error`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorRecord {
            error: self.class(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("error record serializes")
    }
}

/// Core errors raised while validating inputs are config errors; everything
/// raised during a computation is numerical.
impl From<magnon_core::Error> for CliError {
    fn from(err: magnon_core::Error) -> Self {
        match err {
            magnon_core::Error::InvalidInput(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_class() {
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 3);
        assert_eq!(CliError::io("/tmp/x", "denied").exit_code(), 4);
    }

    #[test]
    fn json_record_names_class() {
        let v: serde_json::Value = serde_json::from_str(&CliError::config("bad tau").to_json()).unwrap();
        assert_eq!(v["error"], "config");
        assert_eq!(v["exit_code"], 2);
        assert!(v["message"].as_str().unwrap().contains("bad tau"));
    }
}
