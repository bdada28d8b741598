//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Backward passes are recorded on the tape with the same primitives as the
//! forward pass, so gradients can be differentiated again (needed for
//! Hamiltonian models trained through their own gradients).

mod gradcheck;
mod linear_map;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheck, MAX_CHECKED};
pub use linear_map::{BilinearForm, ChannelMix, LinearMap};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
