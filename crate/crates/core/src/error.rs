use thiserror::Error;

/// Errors raised by the scheme and the harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SfdeError {
    /// Invalid parameters or inconsistent grids.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Non-finite or runaway values produced while stepping.
    #[error("numerical blow-up at step {step}")]
    BlowUp { step: usize },
    /// Two paths compared for a strong error were not driven by the same noise.
    #[error("coupling error: {0}")]
    Coupling(String),
}

impl SfdeError {
    /// `true` for errors that map to the "hard failure" exit status of the CLI.
    pub fn is_hard_failure(&self) -> bool {
        matches!(self, SfdeError::BlowUp { .. } | SfdeError::Coupling(_))
    }
}

pub type Result<T> = std::result::Result<T, SfdeError>;
