//! Small dense-tensor engine with reverse-mode differentiation.
//!
//! Everything runs eagerly on a [`Tape`]; `backward` replays the recorded
//! ops in reverse and returns per-parameter gradients. Parameters live in a
//! [`ParamStore`] keyed by name, which also owns the Adam state and the
//! checkpoint format. [`gradcheck`] provides the finite-difference oracle
//! used to validate every analytic gradient.

mod element;
mod params;
mod tape;
mod tensor;

pub mod checkpoint;
pub mod gradcheck;

pub use element::{DType, Element};
pub use params::{AdamConfig, ParamStore};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: produced a NaN or infinite value")]
    NonFinite { op: &'static str },

    #[error("{op}: index {index} out of range for dimension of size {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}
