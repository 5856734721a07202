use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    /// A computation would exceed a configured size cap.
    #[error("size cap exceeded for {what}: estimated {estimated}, cap {cap}")]
    Size {
        what: String,
        estimated: u64,
        cap: u64,
    },

    /// Malformed textual or JSON input.
    #[error("parse error in `{field}`: {reason}")]
    Parse { field: String, reason: String },

    /// A numerical solver failed to produce a usable answer.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn parse(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
