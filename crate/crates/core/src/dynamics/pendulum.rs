use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::integrate_rk4;
use super::SymmetryWitness;
use crate::error::{Error, Result};

/// State layout `[x1, x2, p1, p2]`, each a 3-vector.
pub const STATE_DIM: usize = 12;

/// Double spring pendulum with optional constant wind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSystem {
    pub m1: f64,
    pub m2: f64,
    pub k1: f64,
    pub k2: f64,
    pub l1: f64,
    pub l2: f64,
    pub g: [f64; 3],
    pub w: [f64; 3],
    pub eps: f64,
}

impl Default for HamiltonianSystem {
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            k1: 10.0,
            k2: 10.0,
            l1: 1.0,
            l2: 1.0,
            g: [0.0, 0.0, -9.81],
            w: [-8.0, -5.0, 0.0],
            eps: 0.0,
        }
    }
}

fn vec3(z: &[f64], block: usize) -> Vector3<f64> {
    Vector3::new(z[3 * block], z[3 * block + 1], z[3 * block + 2])
}

impl HamiltonianSystem {
    pub fn windy() -> Self {
        Self {
            eps: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.m1, self.m2, self.k1, self.k2, self.l1, self.l2];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.eps >= 0.0) {
            return Err(Error::Config(
                "masses, spring constants and rest lengths must be positive and eps non-negative".into(),
            ));
        }
        Ok(())
    }

    fn gv(&self) -> Vector3<f64> {
        Vector3::from(self.g)
    }

    fn wv(&self) -> Vector3<f64> {
        Vector3::from(self.w)
    }

    pub fn kinetic(&self, z: &[f64]) -> f64 {
        vec3(z, 2).norm_squared() / (2.0 * self.m1) + vec3(z, 3).norm_squared() / (2.0 * self.m2)
    }

    pub fn potential(&self, z: &[f64]) -> f64 {
        let (x1, x2) = (vec3(z, 0), vec3(z, 1));
        0.5 * self.k1 * (x1.norm() - self.l1).powi(2)
            + 0.5 * self.k2 * ((x1 - x2).norm() - self.l2).powi(2)
            + self.m1 * self.gv().dot(&x1)
            + self.m2 * self.gv().dot(&x2)
    }

    /// Windless energy `H0 = T + V`.
    pub fn h0(&self, z: &[f64]) -> f64 {
        self.kinetic(z) + self.potential(z)
    }

    /// `H0 + eps H1` with `H1 = -w^T x1 - w^T x2`.
    pub fn hamiltonian(&self, z: &[f64]) -> f64 {
        let (x1, x2) = (vec3(z, 0), vec3(z, 1));
        self.h0(z) - self.eps * (self.wv().dot(&x1) + self.wv().dot(&x2))
    }

    /// `dH/dz` in closed form.
    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let (x1, x2, p1, p2) = (vec3(z, 0), vec3(z, 1), vec3(z, 2), vec3(z, 3));
        let r1 = x1.norm();
        let d = x1 - x2;
        let r12 = d.norm();
        if r1 == 0.0 || r12 == 0.0 {
            log::warn!("spring potential evaluated at its singularity");
        }
        let s1 = x1 * (self.k1 * (r1 - self.l1) / r1);
        let s12 = d * (self.k2 * (r12 - self.l2) / r12);
        let wind = self.wv() * self.eps;
        let dx1 = s1 + s12 + self.gv() * self.m1 - wind;
        let dx2 = -s12 + self.gv() * self.m2 - wind;
        let mut out = Vec::with_capacity(STATE_DIM);
        for v in [dx1, dx2, p1 / self.m1, p2 / self.m2] {
            out.extend_from_slice(v.as_slice());
        }
        out
    }

    /// `z' = J grad H`: positions move with `dH/dp`, momenta with `-dH/dx`.
    pub fn dynamics(&self, z: &[f64]) -> Vec<f64> {
        let g = self.grad(z);
        let mut out = Vec::with_capacity(STATE_DIM);
        out.extend_from_slice(&g[6..12]);
        out.extend(g[0..6].iter().map(|v| -v));
        out
    }
}

/// States at times `t0 + k dt`, `k = 0..L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryChunk {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PendulumData {
    pub train: Vec<TrajectoryChunk>,
    pub test: Vec<TrajectoryChunk>,
}

fn unit_downward<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal) - 2.0,
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn gauss3<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Initial state near a hanging configuration: each bob sits one rest length
/// below its anchor along a downward-biased random direction, plus
/// `0.2 N(0, I)` jitter; momenta are `0.5 N(0, I)`.
pub fn sample_initial_state<R: Rng + ?Sized>(sys: &HamiltonianSystem, rng: &mut R) -> Vec<f64> {
    let x1 = unit_downward(rng) * sys.l1 + gauss3(rng, 0.2);
    let x2 = x1 + unit_downward(rng) * sys.l2 + gauss3(rng, 0.2);
    let (p1, p2) = (gauss3(rng, 0.5), gauss3(rng, 0.5));
    let mut z = Vec::with_capacity(STATE_DIM);
    for v in [x1, x2, p1, p2] {
        z.extend_from_slice(v.as_slice());
    }
    z
}

/// Number of internal RK4 steps per output step for ground truth.
const SUBSTEPS: usize = 20;

fn chunk(sys: &HamiltonianSystem, seed: u64, stream: u64, dt: f64, len: usize) -> Result<TrajectoryChunk> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let z0 = sample_initial_state(sys, &mut rng);
    let fine = integrate_rk4(|z| sys.dynamics(z), &z0, dt / SUBSTEPS as f64, (len - 1) * SUBSTEPS)?;
    Ok(TrajectoryChunk {
        states: fine.into_iter().step_by(SUBSTEPS).collect(),
        dt,
    })
}

/// Train and test chunks of `len` states spaced `dt` apart. Chunk `i` uses
/// its own RNG stream derived from `seed`, so generation order does not
/// matter.
pub fn gen_pendulum(
    sys: &HamiltonianSystem,
    n_train: usize,
    n_test: usize,
    seed: u64,
    dt: f64,
    len: usize,
) -> Result<PendulumData> {
    sys.validate()?;
    if len < 2 {
        return Err(Error::Config("chunks need at least two states".into()));
    }
    let all: Result<Vec<TrajectoryChunk>> = (0..n_train + n_test)
        .into_par_iter()
        .map(|i| chunk(sys, seed, i as u64, dt, len))
        .collect();
    let mut all = all?;
    let test = all.split_off(n_train);
    Ok(PendulumData { train: all, test })
}

/// Rotation by `angle` about the z axis applied to each 3-vector of a state.
pub fn z_rotation(z: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    (0..4).flat_map(|b| (r * vec3(z, b)).iter().copied().collect::<Vec<_>>()).collect()
}

/// Searches z-axis rotations of sampled states for the largest change in
/// energy, relative to the energy scale of the state.
pub fn wind_witness<R: Rng + ?Sized>(sys: &HamiltonianSystem, rng: &mut R, tries: usize) -> SymmetryWitness {
    let mut best = SymmetryWitness {
        description: String::new(),
        violation: 0.0,
    };
    for k in 0..tries {
        let z = sample_initial_state(sys, rng);
        let angle = rng.gen_range(0.1..std::f64::consts::PI);
        let (h, hr) = (sys.hamiltonian(&z), sys.hamiltonian(&z_rotation(&z, angle)));
        let v = (h - hr).abs() / h.abs().max(1.0);
        if v > best.violation {
            best = SymmetryWitness {
                description: format!("state {k}, rotation by {angle:.6} rad about the z axis"),
                violation: v,
            };
        }
    }
    best
}

/// Observed convergence order of RK4 on `sys` from `z0` over time `t`:
/// `log2(err(dt) / err(dt/2))` against a reference at `dt / 64`.
pub fn rk4_observed_order(sys: &HamiltonianSystem, z0: &[f64], t: f64, dt: f64) -> Result<f64> {
    let end = |h: f64| -> Result<Vec<f64>> {
        let steps = (t / h).round() as usize;
        Ok(integrate_rk4(|z| sys.dynamics(z), z0, h, steps)?.pop().expect("nonempty"))
    };
    let reference = end(dt / 64.0)?;
    let err = |v: Vec<f64>| -> f64 {
        v.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let (e1, e2) = (err(end(dt)?), err(end(dt / 2.0)?));
    Ok((e1 / e2).log2())
}
