//! Dense tensor arithmetic with reverse-mode differentiation, the Adam
//! optimizer, gradient clipping, and the checkpoint format.
//!
//! Training runs in `f32`; the gradient-check suite instantiates the same
//! code in `f64` (everything is generic over [`Real`]).

mod checkpoint;
mod kernels;
mod optim;
mod real;
mod store;
mod tape;
mod tensor;

pub mod check;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use optim::{adam_step, clip_global_norm, AdamState};
pub use real::Real;
pub use store::{BoundParams, ParameterStore};
pub use tape::{Tape, TensorRef};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor operations, the optimizer, and checkpoint IO.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid argument in {op}: {message}")]
    InvalidArgument { op: &'static str, message: String },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
}
