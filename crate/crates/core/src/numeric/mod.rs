//! Dense tensors, reverse-mode differentiation and gradient checking.

pub mod activation;
mod gradcheck;
pub mod io;
mod tape;
mod tensor;

pub use activation::{elu, leaky_relu, masked_softmax, sigmoid, sigmoid_scalar};
pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{EdgeIndex, Gradients, Tape, Var, LOG_CLAMP};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("softmax row has every entry masked")]
    DegenerateRow,
    #[error("numerical instability: {0}")]
    Unstable(String),
    #[error("tensor i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("tensor format: {0}")]
    Format(String),
}
