//! Minimal CPU tensor library with reverse-mode gradients, plus the
//! DenseNet-style two-class classifier this workspace trains on
//! histogram feature tensors.
//!
//! Everything is generic over the scalar type: f64 for gradient-check
//! builds, f32 for training builds. Layers cache what their backward
//! pass needs during forward; calling `backward` propagates a loss
//! gradient to every parameter in one reverse sweep.

pub mod adam;
pub mod checkpoint;
pub mod densenet;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod ops;
pub mod scalar;
pub mod tensor;

pub use adam::AdamState;
pub use densenet::{DenseNet, ModelConfig};
pub use layers::{Layer, Mode, Param, ParamKind};
pub use scalar::Real;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("infeasible model shape: {0}")]
    ShapeInfeasible(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
