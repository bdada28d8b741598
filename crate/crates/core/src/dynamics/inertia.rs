use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::SymmetryWitness;
use crate::autodiff::Tensor;
use crate::repr::GroupSpec;

/// Number of point masses per inertia sample.
pub const INERTIA_POINTS: usize = 5;

/// Inputs and targets as `n x d_in` and `n x d_out` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionData {
    pub x: Tensor,
    pub y: Tensor,
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `idx` of both tensors.
    pub fn select(&self, idx: &[usize]) -> RegressionData {
        let pick = |t: &Tensor| {
            let d = t.shape()[1];
            let data = idx.iter().flat_map(|&i| t.data()[i * d..(i + 1) * d].iter().copied()).collect();
            Tensor::matrix(idx.len(), d, data).expect("sized")
        };
        RegressionData {
            x: pick(&self.x),
            y: pick(&self.y),
        }
    }
}

/// `sum_i m_i (x_i^T x_i I - x_i x_i^T)`.
pub fn inertia_tensor(masses: &[f64], positions: &[Vector3<f64>]) -> Matrix3<f64> {
    masses
        .iter()
        .zip(positions)
        .map(|(m, x)| (Matrix3::identity() * x.norm_squared() - x * x.transpose()) * *m)
        .sum()
}

/// `I + 0.3 I^2 z z^T I` with `z` the unit vector along the third axis.
pub fn modified_inertia(i: &Matrix3<f64>) -> Matrix3<f64> {
    let z = Vector3::z();
    i + i * i * (z * z.transpose()) * i * 0.3
}

fn unpack(row: &[f64]) -> (Vec<f64>, Vec<Vector3<f64>>) {
    let masses = (0..INERTIA_POINTS).map(|i| row[4 * i]).collect();
    let positions = (0..INERTIA_POINTS)
        .map(|i| Vector3::new(row[4 * i + 1], row[4 * i + 2], row[4 * i + 3]))
        .collect();
    (masses, positions)
}

fn target(row: &[f64], modified: bool) -> Matrix3<f64> {
    let (m, x) = unpack(row);
    let i = inertia_tensor(&m, &x);
    if modified {
        modified_inertia(&i)
    } else {
        i
    }
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

/// `n` samples with masses `|N(0,1)| + 0.1` and positions `N(0, I_3)`.
/// Inputs are laid out `[m_1, x_1, ..., m_5, x_5]`; targets are the
/// row-major flattened 3x3 matrix.
pub fn gen_inertia<R: Rng + ?Sized>(n: usize, rng: &mut R, modified: bool) -> RegressionData {
    let d_in = 4 * INERTIA_POINTS;
    let mut x = Vec::with_capacity(n * d_in);
    let mut y = Vec::with_capacity(n * 9);
    for _ in 0..n {
        let start = x.len();
        for _ in 0..INERTIA_POINTS {
            let m: f64 = rng.sample(StandardNormal);
            x.push(m.abs() + 0.1);
            for _ in 0..3 {
                x.push(rng.sample(StandardNormal));
            }
        }
        y.extend_from_slice(&row_major(&target(&x[start..], modified)));
    }
    RegressionData {
        x: Tensor::matrix(n, d_in, x).expect("sized"),
        y: Tensor::matrix(n, 9, y).expect("sized"),
    }
}

fn rotate_input(row: &[f64], r: &Matrix3<f64>) -> Vec<f64> {
    let mut out = row.to_vec();
    for i in 0..INERTIA_POINTS {
        let x = r * Vector3::new(row[4 * i + 1], row[4 * i + 2], row[4 * i + 3]);
        out[4 * i + 1..4 * i + 4].copy_from_slice(x.as_slice());
    }
    out
}

fn defect(row: &[f64], g: &Matrix3<f64>, modified: bool) -> f64 {
    let lhs = target(&rotate_input(row, g), modified);
    let rhs = g * target(row, modified) * g.transpose();
    (lhs - rhs).norm() / rhs.norm().max(1e-300)
}

/// Largest relative `||I(m, g x) - g I(m, x) g^T||` over `elements` sampled
/// O(3) elements and `data` inputs.
pub fn inertia_equivariance_defect<R: Rng + ?Sized>(
    data: &RegressionData,
    elements: usize,
    modified: bool,
    rng: &mut R,
) -> f64 {
    let o3 = GroupSpec::o3();
    let d = data.x.shape()[1];
    let mut worst: f64 = 0.0;
    for _ in 0..elements {
        let g = o3.sample_element(rng);
        let g = Matrix3::from_iterator(g.iter().copied());
        for row in data.x.data().chunks(d) {
            worst = worst.max(defect(row, &g, modified));
        }
    }
    worst
}

/// Searches rotations about the first axis for one that the modified target
/// does not respect, returning the worst violation found.
pub fn modified_inertia_witness<R: Rng + ?Sized>(rng: &mut R, tries: usize) -> SymmetryWitness {
    let mut best = SymmetryWitness {
        description: String::new(),
        violation: 0.0,
    };
    let data = gen_inertia(tries.max(1), rng, true);
    for (k, row) in data.x.data().chunks(4 * INERTIA_POINTS).enumerate() {
        let angle = rng.gen_range(0.1..std::f64::consts::PI);
        let (s, c) = angle.sin_cos();
        let g = Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
        let v = defect(row, &g, true);
        if v > best.violation {
            best = SymmetryWitness {
                description: format!("sample {k}, rotation by {angle:.6} rad about the x axis"),
                violation: v,
            };
        }
    }
    best
}
