use thiserror::Error;

use crate::checkpoint::CheckpointError;
use rganet_tensor::TensorError;

#[derive(Debug, Error)]
pub enum NetworkError {
    /// Invalid or inconsistent model configuration.
    #[error("config error: {detail}")]
    Config { detail: String },

    /// Caller misuse (unknown ablation case, missing parameter, ...).
    #[error("usage error: {detail}")]
    Usage { detail: String },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
