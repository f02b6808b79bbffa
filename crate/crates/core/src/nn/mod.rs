//! A small CPU neural-network engine: channel-major tensors, explicit
//! backward passes, Adam, finite-difference verification and a binary
//! checkpoint format.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
mod real;
mod tensor;

pub use checkpoint::{decode_network, encode_network, load_checkpoint, save_checkpoint, sidecar_path, Checkpoint};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use layers::{LayerSpec, Mode};
pub use loss::{cross_entropy, squared_error};
pub use network::Network;
pub use optim::Adam;
pub use real::Real;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("{0}: backward called without a cached training forward pass")]
    StaleCache(&'static str),
    #[error("invalid layer configuration: {0}")]
    InvalidSpec(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
