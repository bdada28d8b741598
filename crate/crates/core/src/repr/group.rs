use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::expm::expm;
use crate::error::{Error, Result};

const MAX_WORD_LEN: usize = 5;

/// A matrix group given by discrete generators and Lie-algebra generators in
/// its defining representation.
#[derive(Clone, Debug)]
pub struct GroupSpec {
    name: String,
    base_dim: usize,
    discrete_generators: Vec<DMatrix<f64>>,
    lie_generators: Vec<DMatrix<f64>>,
}

fn mat(n: usize, rows: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, rows)
}

/// `E_ij - E_ji`
fn antisym(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = -1.0;
    m[(j, i)] = 1.0;
    m
}

fn rotation_generators(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(antisym(n, i, j));
        }
    }
    out
}

fn cyclic_permutation(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[((i + 1) % n, i)] = 1.0;
    }
    m
}

impl GroupSpec {
    /// Validates and builds a group from explicit generators.
    pub fn new(
        name: impl Into<String>,
        base_dim: usize,
        discrete_generators: Vec<DMatrix<f64>>,
        lie_generators: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        if base_dim == 0 {
            return Err(Error::Dimension(format!("group {name} has base_dim 0")));
        }
        for g in discrete_generators.iter().chain(&lie_generators) {
            if g.nrows() != base_dim || g.ncols() != base_dim {
                return Err(Error::Dimension(format!(
                    "generator of {name} is {}x{}, expected {base_dim}x{base_dim}",
                    g.nrows(),
                    g.ncols()
                )));
            }
        }
        for g in &discrete_generators {
            if g.determinant().abs() <= 1e-10 {
                return Err(Error::Numerical(format!(
                    "discrete generator of {name} is singular"
                )));
            }
        }
        if !lie_generators.is_empty() {
            let stacked = DMatrix::from_fn(base_dim * base_dim, lie_generators.len(), |r, c| {
                lie_generators[c].as_slice()[r]
            });
            let sv = stacked.singular_values();
            let max = sv.max();
            if sv.iter().any(|&s| s <= 1e-10 * max.max(1.0)) {
                return Err(Error::Numerical(format!(
                    "Lie generators of {name} are linearly dependent"
                )));
            }
        }
        Ok(Self {
            name,
            base_dim,
            discrete_generators,
            lie_generators,
        })
    }

    fn known(name: &str, n: usize, discrete: Vec<DMatrix<f64>>, lie: Vec<DMatrix<f64>>) -> Self {
        Self::new(name, n, discrete, lie).expect("built-in group is valid")
    }

    /// The group with no generators acting on `R^n`.
    pub fn trivial(n: usize) -> Self {
        Self::known(&format!("Trivial({n})"), n, vec![], vec![])
    }

    pub fn so2() -> Self {
        Self::known("SO(2)", 2, vec![], rotation_generators(2))
    }

    pub fn o2() -> Self {
        Self::known("O(2)", 2, vec![mat(2, &[1.0, 0.0, 0.0, -1.0])], rotation_generators(2))
    }

    pub fn so3() -> Self {
        Self::known("SO(3)", 3, vec![], rotation_generators(3))
    }

    pub fn o3() -> Self {
        let reflect = mat(3, &[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        Self::known("O(3)", 3, vec![reflect], rotation_generators(3))
    }

    /// Volume and orientation preserving maps of `R^3`.
    pub fn sl3() -> Self {
        let mut lie = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let mut m = DMatrix::zeros(3, 3);
                    m[(i, j)] = 1.0;
                    lie.push(m);
                }
            }
        }
        lie.push(mat(3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]));
        lie.push(mat(3, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]));
        Self::known("SL(3)", 3, vec![], lie)
    }

    /// Rotations about the z axis acting on `R^3`.
    pub fn so2_about_z() -> Self {
        Self::known("SO(2)z", 3, vec![], vec![antisym(3, 0, 1)])
    }

    /// Rotations about the z axis plus the reflection `y -> -y`, acting on `R^3`.
    pub fn o2_about_z() -> Self {
        let reflect = mat(3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        Self::known("O(2)z", 3, vec![reflect], vec![antisym(3, 0, 1)])
    }

    /// Z2 acting on a left/right pair by swapping it.
    pub fn z2() -> Self {
        Self::known("Z2", 2, vec![cyclic_permutation(2)], vec![])
    }

    /// Z4 acting on four items by cyclic permutation.
    pub fn z4() -> Self {
        Self::known("Z4", 4, vec![cyclic_permutation(4)], vec![])
    }

    /// Two independent sign flips acting diagonally on `R^2`.
    pub fn z2xz2() -> Self {
        Self::known(
            "Z2xZ2",
            2,
            vec![mat(2, &[-1.0, 0.0, 0.0, 1.0]), mat(2, &[1.0, 0.0, 0.0, -1.0])],
            vec![],
        )
    }

    /// Symmetries of the square.
    pub fn d4() -> Self {
        Self::known(
            "D4",
            2,
            vec![mat(2, &[0.0, -1.0, 1.0, 0.0]), mat(2, &[1.0, 0.0, 0.0, -1.0])],
            vec![],
        )
    }

    /// Looks a group up by name. Accepts the canonical names (`SO(3)`, `Z2xZ2`,
    /// `O(2)z`, ...) and compact lowercase aliases (`so3`, `z2xz2`, `o2z`).
    pub fn by_name(name: &str) -> Result<Self> {
        let key: String = name
            .chars()
            .filter(|c| !matches!(c, '(' | ')' | ' ' | '_' | '-'))
            .collect::<String>()
            .to_lowercase();
        let g = match key.as_str() {
            "so2" => Self::so2(),
            "o2" => Self::o2(),
            "so3" => Self::so3(),
            "o3" => Self::o3(),
            "sl3" => Self::sl3(),
            "so2z" => Self::so2_about_z(),
            "o2z" => Self::o2_about_z(),
            "z2" => Self::z2(),
            "z4" => Self::z4(),
            "z2xz2" | "z2z2" => Self::z2xz2(),
            "d4" => Self::d4(),
            _ => {
                if let Some(n) = key.strip_prefix("trivial").and_then(|s| s.parse().ok()) {
                    Self::trivial(n)
                } else {
                    return Err(Error::Unknown {
                        kind: "group",
                        name: name.to_string(),
                    });
                }
            }
        };
        Ok(g)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn discrete_generators(&self) -> &[DMatrix<f64>] {
        &self.discrete_generators
    }

    pub fn lie_generators(&self) -> &[DMatrix<f64>] {
        &self.lie_generators
    }

    pub fn is_finite(&self) -> bool {
        self.lie_generators.is_empty()
    }

    /// `exp(sum_i coeffs[i] * A_i)` over the Lie generators.
    pub fn exp_lie(&self, coeffs: &[f64]) -> Result<DMatrix<f64>> {
        if coeffs.len() != self.lie_generators.len() {
            return Err(Error::Dimension(format!(
                "{} Lie coefficients for {} generators",
                coeffs.len(),
                self.lie_generators.len()
            )));
        }
        let n = self.base_dim;
        let a = self
            .lie_generators
            .iter()
            .zip(coeffs)
            .fold(DMatrix::zeros(n, n), |acc, (g, c)| acc + g * *c);
        Ok(expm(&a))
    }

    /// Product of the discrete generators at the given indices.
    pub fn word(&self, letters: &[usize]) -> DMatrix<f64> {
        let n = self.base_dim;
        letters.iter().fold(DMatrix::identity(n, n), |acc, &i| {
            acc * &self.discrete_generators[i]
        })
    }

    /// Random element: a word of at most five discrete generators times the
    /// exponential of a standard-normal combination of Lie generators.
    pub fn sample_element<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let mut g = if self.discrete_generators.is_empty() {
            DMatrix::identity(self.base_dim, self.base_dim)
        } else {
            let len = rng.gen_range(0..=MAX_WORD_LEN);
            let letters: Vec<usize> = (0..len)
                .map(|_| rng.gen_range(0..self.discrete_generators.len()))
                .collect();
            self.word(&letters)
        };
        if !self.lie_generators.is_empty() {
            let coeffs: Vec<f64> = (0..self.lie_generators.len())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            g *= self.exp_lie(&coeffs).expect("coefficient count matches");
        }
        g
    }

    /// All elements of a finite group by breadth-first closure over the
    /// generators. Returns `None` for Lie groups or if closure exceeds `limit`.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<DMatrix<f64>>> {
        if !self.is_finite() {
            return None;
        }
        let n = self.base_dim;
        let mut elements = vec![DMatrix::<f64>::identity(n, n)];
        let mut frontier = elements.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for e in &frontier {
                for h in &self.discrete_generators {
                    let cand = e * h;
                    if !elements.iter().any(|x| (x - &cand).norm() < 1e-9) {
                        elements.push(cand.clone());
                        next.push(cand);
                        if elements.len() > limit {
                            return None;
                        }
                    }
                }
            }
            frontier = next;
        }
        Some(elements)
    }
}
