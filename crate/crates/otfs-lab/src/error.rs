//! Error taxonomy shared by every module.
//!
//! Errors fall into three operational classes: configuration errors (bad
//! parameters, rejected before any computation), dimension errors (a frame or
//! matrix does not match the grid it claims to belong to) and numerical
//! failures (ill-conditioned solves, non-finite losses). The CLI maps the
//! classes onto distinct exit codes.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Invalid configuration value; rejected before any computation runs.
    #[error("configuration error: {0}")]
    Config(String),

    /// Shape disagreement between an input and the grid or operation contract.
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    /// A numerical routine could not produce a trustworthy result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Shape or argument violation inside the differentiation engine.
    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    TomlParse(#[from] toml::de::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
