//! Synthetic datasets: moment of inertia regression and the double spring
//! pendulum, plus fixed-step RK4 integration and Hamiltonian rollout losses.

mod hnn;
mod inertia;
mod integrate;
mod io;
mod pendulum;

pub use hnn::{block_input_scale, hnn_dynamics, hnn_rollout_loss, hnn_rollout_loss_var, rollout_relative_error, rollout_var, stack_steps};
pub use inertia::{
    gen_inertia, inertia_equivariance_defect, inertia_tensor, modified_inertia, modified_inertia_witness,
    RegressionData, INERTIA_POINTS,
};
pub use integrate::{integrate_rk4, rk4_step};
pub use io::{read_dataset, write_dataset, Dataset, DatasetMeta};
pub use pendulum::{
    gen_pendulum, rk4_observed_order, sample_initial_state, wind_witness, z_rotation, HamiltonianSystem,
    PendulumData, TrajectoryChunk, STATE_DIM,
};

use serde::{Deserialize, Serialize};

/// A concrete transformation under which a target fails to transform as the
/// symmetry predicts, with the size of the failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryWitness {
    pub description: String,
    pub violation: f64,
}
