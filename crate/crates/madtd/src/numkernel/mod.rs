//! Minimal dense differentiable-computation kernel: matrices, an eager
//! reverse-mode tape, named parameter stores, and the Adam/soft-update
//! utilities the rest of the crate builds on.

mod mat;
mod optim;
mod params;
mod tape;

pub use mat::Mat;
pub use optim::{adam_step, AdamState};
pub use params::{soft_update, ParamStore};
pub use tape::{mish, softplus, Gradients, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("shape mismatch in {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("unknown parameter name {0}")]
    UnknownParam(String),
    #[error("parameter name sets do not match")]
    NameMismatch,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
}
