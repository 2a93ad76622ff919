use thiserror::Error;

/// Errors surfaced by the library. Internal invariant breaches (index out of
/// range, mismatched plan/sample pairs) panic instead; these variants cover
/// conditions reachable from user input or configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
