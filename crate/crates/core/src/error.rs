use alloc::string::String;

/// Errors raised by the pure kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("vector norm below 1e-12")]
    ZeroVector,

    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed encoding: {0}")]
    Decode(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
