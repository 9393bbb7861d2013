//! Dense `f64` tensors and a reverse-mode operation tape.

mod grad_check;
mod kernels;
mod tape;
mod tensor;

pub use grad_check::{central_difference, grad_check, grad_check_many, relative_error, relative_error_floored};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
