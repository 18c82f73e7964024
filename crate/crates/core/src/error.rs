//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input vector length does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A batch operation was invoked with no samples.
    #[error("empty batch")]
    EmptyBatch,

    /// Forward pass produced a non-finite activation.
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    /// Optimizer step refused because the gradient contains NaN/inf.
    #[error("non-finite gradient at component {index}")]
    NonFiniteGradient { index: usize },

    /// A distance metric is undefined for the given inputs
    /// (zero vector under cosine, constant vector under correlation, ...).
    #[error("metric undefined for input: {0}")]
    MetricUndefined(&'static str),

    /// Scene parameters fail validation.
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    /// Direct-path tap index falls outside the modeled tap window.
    #[error("scene under-resolved: direct path tap {tap} >= n_taps {n_taps}")]
    SceneUnderResolved { tap: usize, n_taps: usize },

    /// A domain change references an obstacle id that does not exist.
    #[error("invalid domain change: {0}")]
    InvalidChange(String),

    /// Selection request cannot be satisfied by the candidate pool.
    #[error("selection of {requested} exemplars from pool of {available}")]
    PoolTooSmall { requested: usize, available: usize },

    /// Configuration rejected before any work was done.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Training aborted because the loss diverged.
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    /// Malformed binary dataset file.
    #[error("bad dataset file: {0}")]
    BadDatasetFile(String),
}
