//! Minimal differentiable-array substrate.
//!
//! [`Tensor`] holds dense `f64` data; [`Graph`] records operations on
//! tensors and differentiates scalar outputs in reverse mode;
//! [`grad_check`] validates those gradients against central differences.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{logsumexp, Gradients, Graph, Segment, Var};
pub use tensor::{matmul, Tensor};
