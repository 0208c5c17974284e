//! Dense-tensor arithmetic with reverse-mode automatic differentiation.
//!
//! The tape is define-by-run: a fresh [`Tape`] is built for every forward
//! pass and dropped after the gradients are read. Tensors are immutable
//! once written to a tape node, so independent tapes can run on separate
//! threads without coordination.

pub mod gradcheck;
pub mod kernels;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use ops::softmax_temperature;
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};

/// Errors raised by tensor construction and tape operations.
#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} implies {expected} elements but {actual} were provided")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("{op} expects a matrix operand, got shape {shape:?}")]
    NotAMatrix { op: &'static str, shape: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this tape; call reset_grads first")]
    BackwardAlreadyRun,
    #[error("slice [{start}, {start}+{len}) out of bounds for axis of size {size}")]
    SliceOutOfBounds {
        start: usize,
        len: usize,
        size: usize,
    },
    #[error("index {index} out of bounds for axis of size {size}")]
    IndexOutOfBounds { index: usize, size: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
