use thiserror::Error;

/// Failure classes shared by every module.
///
/// The CLI maps these onto exit codes, so the variants are coarse on purpose.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HfaError {
    /// Elements or characters from different groups were combined.
    #[error("structural error: {0}")]
    Structural(String),
    /// An operation's precondition does not hold for the given input.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// Input data is malformed or inconsistent.
    #[error("invalid input: {0}")]
    Input(String),
    /// An enumeration or search would exceed the configured budget.
    #[error("resource budget exceeded: {0}")]
    Budget(String),
    /// A computed certificate failed its own check.
    #[error("certificate violation: {0}")]
    Certificate(String),
    /// Numerical diagnostics went out of range.
    #[error("numerical diagnostic: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, HfaError>;

pub(crate) fn pre(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(HfaError::Precondition(msg()))
    }
}
