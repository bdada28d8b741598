//! Orthonormal bases of equivariant linear maps.
//!
//! A basis `Q` has one column per free coordinate; column `k` is `vec(W_k)`
//! in column-major order for an `n_out x n_in` matrix `W_k`. Bases are
//! stored as a list of blocks, each covering a rectangular sub-matrix of
//! `W`, with sparse columns. Blocks never overlap, so columns from different
//! blocks are orthogonal.

mod constraints;
mod conv;
mod solve;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use constraints::{build_constraints, ConstraintBlock, ConstraintSystem, MAX_LAYER_ENTRIES};
pub use conv::{conv_channel_basis, conv_toeplitz_basis, conv_channel_bias_basis};
pub use solve::{bias_basis, solve_basis, BasisSolver, SVD_TOLERANCE};

use crate::error::{Error, Result};
use crate::repr::{GroupSpec, Rep};

/// One sparse basis column inside a block: `(row, col, value)` entries in
/// block-local coordinates.
pub type SparseColumn = Vec<(u32, u32, f64)>;

/// A rectangular piece of the full weight matrix spanned by its own columns.
#[derive(Clone, Debug)]
pub struct BasisBlock {
    pub row_offset: usize,
    pub col_offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Index of this block's first coordinate in `beta`.
    pub coord_offset: usize,
    pub columns: Arc<Vec<SparseColumn>>,
}

impl BasisBlock {
    pub fn rank(&self) -> usize {
        self.columns.len()
    }
}

/// Orthonormal basis of the equivariant subspace of `n_out x n_in` matrices.
#[derive(Clone, Debug)]
pub struct EquivariantBasis {
    n_out: usize,
    n_in: usize,
    rank: usize,
    blocks: Vec<BasisBlock>,
}

/// Entries below this magnitude are dropped when a dense solution is stored.
const DROP_TOLERANCE: f64 = 1e-14;

pub(crate) fn sparsify(q: &DMatrix<f64>, rows: usize, cols: usize) -> Vec<SparseColumn> {
    debug_assert_eq!(q.nrows(), rows * cols);
    q.column_iter()
        .map(|c| {
            c.iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > DROP_TOLERANCE)
                .map(|(idx, &v)| ((idx % rows) as u32, (idx / rows) as u32, v))
                .collect()
        })
        .collect()
}

impl EquivariantBasis {
    /// Assembles a basis from non-overlapping blocks. `coord_offset`s are
    /// reassigned in block order.
    pub fn from_blocks(n_out: usize, n_in: usize, mut blocks: Vec<BasisBlock>) -> Self {
        let mut rank = 0;
        for b in &mut blocks {
            b.coord_offset = rank;
            rank += b.rank();
        }
        Self {
            n_out,
            n_in,
            rank,
            blocks,
        }
    }

    /// A basis given by dense orthonormal columns over the whole matrix.
    pub fn from_dense(n_out: usize, n_in: usize, q: &DMatrix<f64>) -> Self {
        let block = BasisBlock {
            row_offset: 0,
            col_offset: 0,
            rows: n_out,
            cols: n_in,
            coord_offset: 0,
            columns: Arc::new(sparsify(q, n_out, n_in)),
        };
        Self::from_blocks(n_out, n_in, vec![block])
    }

    /// Every matrix is allowed: `Q = I`.
    pub fn full(n_out: usize, n_in: usize) -> Self {
        Self::from_dense(n_out, n_in, &DMatrix::identity(n_out * n_in, n_out * n_in))
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    /// Materializes `Q` as an `(n_out * n_in) x r` matrix.
    pub fn dense_q(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n_out * self.n_in, self.rank);
        for b in &self.blocks {
            for (k, col) in b.columns.iter().enumerate() {
                for &(r, c, v) in col {
                    let row = b.row_offset + r as usize;
                    let colw = b.col_offset + c as usize;
                    q[(colw * self.n_out + row, b.coord_offset + k)] = v;
                }
            }
        }
        q
    }

    /// `reshape(Q beta)` written into a row-major `n_out x n_in` buffer.
    pub fn expand_into(&self, beta: &[f64], out: &mut [f64]) {
        assert_eq!(beta.len(), self.rank, "coordinate count");
        assert_eq!(out.len(), self.n_out * self.n_in, "output size");
        out.iter_mut().for_each(|v| *v = 0.0);
        for b in &self.blocks {
            for (k, col) in b.columns.iter().enumerate() {
                let coeff = beta[b.coord_offset + k];
                if coeff == 0.0 {
                    continue;
                }
                for &(r, c, v) in col {
                    let row = b.row_offset + r as usize;
                    let colw = b.col_offset + c as usize;
                    out[row * self.n_in + colw] += coeff * v;
                }
            }
        }
    }

    /// `Q^T vec(W)` for a row-major `n_out x n_in` buffer.
    pub fn contract_into(&self, w: &[f64], out: &mut [f64]) {
        assert_eq!(w.len(), self.n_out * self.n_in, "input size");
        assert_eq!(out.len(), self.rank, "coordinate count");
        for b in &self.blocks {
            for (k, col) in b.columns.iter().enumerate() {
                out[b.coord_offset + k] = col
                    .iter()
                    .map(|&(r, c, v)| {
                        v * w[(b.row_offset + r as usize) * self.n_in + b.col_offset + c as usize]
                    })
                    .sum();
            }
        }
    }

    pub fn expand(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.n_out * self.n_in];
        self.expand_into(beta.as_slice(), &mut buf);
        DMatrix::from_row_slice(self.n_out, self.n_in, &buf)
    }

    pub fn contract(&self, w: &DMatrix<f64>) -> DVector<f64> {
        let row_major: Vec<f64> = w.transpose().as_slice().to_vec();
        let mut out = vec![0.0; self.rank];
        self.contract_into(&row_major, &mut out);
        DVector::from_vec(out)
    }

    /// `reshape(Q Q^T vec(W))`.
    pub fn project(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if w.nrows() != self.n_out || w.ncols() != self.n_in {
            return Err(Error::Shape {
                op: "project_equivariant",
                lhs: vec![self.n_out, self.n_in],
                rhs: vec![w.nrows(), w.ncols()],
            });
        }
        Ok(self.expand(&self.contract(w)))
    }

    /// `W - project(W)`.
    pub fn complement(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(w - self.project(w)?)
    }

    /// Random element of the subspace with standard-normal coordinates.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let beta = DVector::from_fn(self.rank, |_, _| rng.sample(StandardNormal));
        self.expand(&beta)
    }

    /// Largest `||rho_out(g) W - W rho_in(g)||_F / ||W||_F` over `samples`
    /// group elements, for one random `W` in the subspace. Zero for rank 0.
    pub fn max_constraint_violation<R: Rng + ?Sized>(
        &self,
        group: &GroupSpec,
        rep_in: &Rep,
        rep_out: &Rep,
        samples: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if self.rank == 0 {
            return Ok(0.0);
        }
        let w = self.random_element(rng);
        let norm = w.norm();
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let g = group.sample_element(rng);
            let lhs = rep_out.rho(&g)? * &w;
            let rhs = &w * rep_in.rho(&g)?;
            worst = worst.max((lhs - rhs).norm() / norm);
        }
        Ok(worst)
    }
}

/// `reshape(Q Q^T vec(W))`.
pub fn project_equivariant(basis: &EquivariantBasis, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    basis.project(w)
}
