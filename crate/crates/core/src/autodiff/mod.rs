//! Reverse-mode differentiation, the Adam optimizer and a finite-difference
//! gradient checker, all in `f64`.

mod adam;
mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use adam::Adam;
pub use gradcheck::finite_difference_check;
pub use ops::{bce_with_logits, segment_softmax, sigmoid, softplus, LEAKY_RELU_SLOPE};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
