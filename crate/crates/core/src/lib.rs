//! Residual pathway priors.
//!
//! Hard equivariance constraints are turned into soft priors by writing every
//! linear layer as `W = A + B`, where `A` lives in the solved equivariant
//! subspace with a broad Gaussian prior and `B` is unconstrained with a
//! narrower one.

pub mod autodiff;
pub mod basis;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod layers;
pub mod repr;

pub use error::{Error, Result};
