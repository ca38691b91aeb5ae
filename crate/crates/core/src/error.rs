use std::fmt;

/// Errors raised by the scheduling library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A generator or configuration parameter is out of range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// The task graph is not a DAG, or a simulation could not make progress.
    #[error("structural error: {0}")]
    Structural(String),

    /// An operation was called with inputs violating its precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An instance or schedule file could not be parsed.
    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    /// The instance file was written by an incompatible format version.
    #[error("unsupported instance format version {found} (expected {expected})")]
    Version { found: i64, expected: i64 },

    /// An instance or schedule violates one or more model invariants.
    #[error("validation failed: {}", Violations(.0))]
    Validation(Vec<String>),

    /// The instance is too large for exhaustive enumeration.
    #[error("instance too large for enumeration: {what} = {value} exceeds limit {limit}")]
    Size {
        what: &'static str,
        value: usize,
        limit: usize,
    },
}

struct Violations<'a>(&'a [String]);

impl fmt::Display for Violations<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("; "))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
