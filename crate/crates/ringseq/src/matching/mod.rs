//! Assignment solvers: a differentiable soft relaxation for training and
//! an exact combinatorial solver for inference.

mod hungarian;
mod sinkhorn;

pub use hungarian::hungarian_assign;
pub use sinkhorn::{sinkhorn_normalize, SoftAssignment};
