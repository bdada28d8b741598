//! Matrix groups, representation expressions and their evaluation.

pub mod catalog;
pub mod expm;
pub mod group;
pub mod rep;
pub mod text;

pub use catalog::{catalog_entry, mujoco_catalog, verification_report, CatalogEntry};
pub use expm::expm;
pub use group::GroupSpec;
pub use rep::{block_diag, drho_of, rho_of, Rep, RepKind};
pub use text::parse_rep;

use rand::Rng;
use nalgebra::DMatrix;

/// Random group element; see [`GroupSpec::sample_element`].
pub fn sample_group_element<R: Rng + ?Sized>(group: &GroupSpec, rng: &mut R) -> DMatrix<f64> {
    group.sample_element(rng)
}
