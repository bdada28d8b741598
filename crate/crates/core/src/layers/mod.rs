//! Equivariant, residual-pathway and plain MLP models.
//!
//! Every linear layer of an RPP model computes `W = reshape(Q beta) + B`
//! with separate Gaussian priors on `beta` (variance `sigma_a2`) and `B`
//! (variance `sigma_b2`). EMLP keeps only the equivariant path, MLP only the
//! free one.

mod metrics;
mod model;
mod prior;
mod spec;

pub use metrics::{equivariance_error, mean_equivariance_error, rel_err};
pub use model::{Checkpoint, CheckpointHeader, Model, Param};
pub use prior::{min_norm_split, sample_prior_weight};
pub use spec::{ConvSpec, HiddenLayout, ModelKind, ModelSpec, PriorClass};

#[cfg(test)]
mod tests;
