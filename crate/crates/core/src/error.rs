use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps the variants onto exit codes, so keep the split between
/// bad data, numerical failure and bad configuration meaningful.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    /// Input data violates a model requirement (nonpositive travel time, missing segment, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Vector lengths disagree.
    #[error("shape error: {what} has length {got}, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// An iterative routine failed or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid configuration or hyperparameters.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        func,
        detail: detail.into(),
    }
}
