//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error in one of the textual input formats.
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("unknown process `{0}`")]
    UnknownProcess(String),

    #[error("unknown element `{0}`")]
    UnknownElement(String),

    /// A pattern has a variable that is never bound by a positive atom,
    /// so evaluation would flounder.
    #[error("unsafe pattern: variable `{var}` occurs only under negation in `{pattern}`")]
    UnsafePattern { var: String, pattern: String },

    /// State-space exploration hit the configured budget.
    #[error("state budget exceeded: more than {budget} states reachable from `{process}`")]
    BudgetExceeded { process: String, budget: usize },

    /// A query failed normal-form validation; the report carries the reasons.
    #[error("query rejected by normal-form validation: {0}")]
    NotNormalForm(String),

    #[error("enactment requires a well-formed schema: {0} violation(s), first: {1}")]
    NotWellFormed(usize, String),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { file: file.to_string(), line, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
