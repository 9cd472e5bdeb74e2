use thiserror::Error;

pub type Result<T> = std::result::Result<T, LossError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension { what: &'static str, expected: String, actual: String },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

impl LossError {
    pub(crate) fn dimension(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Self::Dimension { what, expected: expected.to_string(), actual: actual.to_string() }
    }
}
