//! Error type shared across the engine.

/// Errors surfaced by the engine's public operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument is outside its valid domain (zero frame index, empty
    /// token sequence, out-of-range k, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A contract the caller must uphold was violated (e.g. a fully
    /// masked attention row).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Streamed chunk has the wrong number of rows for the configured
    /// chunk geometry.
    #[error("chunking error: {0}")]
    Chunking(String),

    /// The stream grew past the model's maximum context.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Not enough input to start streaming (shorter than the initial chunk).
    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    /// A computation produced NaN/Inf or otherwise left the finite domain.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Decoder state was driven past the end of the stream or otherwise
    /// used out of order.
    #[error("state error: {0}")]
    State(String),

    /// Fine-tuning diverged; carries the step at which it happened.
    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },
}

pub type Result<T> = std::result::Result<T, EngineError>;
