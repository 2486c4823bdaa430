//! Library side of the `rqre` command: config parsing, run directories,
//! sweeps and audits.

pub mod config;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("audit failed: {0}")]
    Audit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Audit(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<rqre_core::ovi::OviError> for CliError {
    fn from(e: rqre_core::ovi::OviError) -> Self {
        match e {
            rqre_core::ovi::OviError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<rqre_core::eval::EvalError> for CliError {
    fn from(e: rqre_core::eval::EvalError) -> Self {
        match e {
            rqre_core::eval::EvalError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
