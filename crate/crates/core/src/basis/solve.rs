use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use super::constraints::{build_constraints, ConstraintSystem};
use super::{sparsify, BasisBlock, EquivariantBasis, SparseColumn};
use crate::error::{Error, Result};
use crate::repr::{GroupSpec, Rep};

/// Relative singular-value cutoff: `sigma < tol * max(sigma_max, 1)` counts as zero.
pub const SVD_TOLERANCE: f64 = 1e-7;

const SVD_MAX_ITER: usize = 10_000;

/// Orthonormal null space of `C` as dense columns.
fn null_space(c: &DMatrix<f64>, tolerance: f64) -> Result<DMatrix<f64>> {
    let n = c.ncols();
    if c.nrows() == 0 || c.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::identity(n, n));
    }
    // Reduce tall systems to an n x n triangle first; pad short ones with
    // zero rows so the SVD returns a full set of right singular vectors.
    let square = if c.nrows() > n {
        c.clone().qr().r()
    } else {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
        padded
    };
    let svd = square.clone().try_svd(false, true, f64::EPSILON, SVD_MAX_ITER).ok_or_else(|| {
        Error::Numerical(format!(
            "SVD did not converge on {}x{} constraint matrix (Frobenius norm {:.3e})",
            c.nrows(),
            n,
            c.norm()
        ))
    })?;
    let v_t = svd.v_t.expect("requested V^T");
    let sigma = &svd.singular_values;
    let cutoff = tolerance * sigma.max().max(1.0);
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] < cutoff).collect();
    let mut q = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        q.set_column(k, &v_t.row(i).transpose());
    }
    Ok(q)
}

/// Dense SVD solve of a whole constraint system.
pub fn solve_basis(system: &ConstraintSystem) -> Result<EquivariantBasis> {
    if system.rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite constraint matrix".into()));
    }
    let q = null_space(&system.rows, SVD_TOLERANCE)?;
    Ok(EquivariantBasis::from_dense(system.n_out, system.n_in, &q))
}

/// Solves equivariant bases for one group, splitting direct sums.
///
/// Because `rho_in` and `rho_out` are block diagonal over their summands,
/// the constraint decouples into one independent problem per pair of
/// (output summand, input summand). Each distinct pair is solved once by
/// dense SVD and cached.
pub struct BasisSolver {
    group: GroupSpec,
    cache: Mutex<HashMap<(String, String), Arc<Vec<SparseColumn>>>>,
}

impl BasisSolver {
    pub fn new(group: GroupSpec) -> Self {
        Self {
            group,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    fn leaf_pair(&self, leaf_in: &Rep, leaf_out: &Rep) -> Result<Arc<Vec<SparseColumn>>> {
        let key = (leaf_in.to_string(), leaf_out.to_string());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let system = build_constraints(&self.group, leaf_in, leaf_out)?;
        let q = null_space(&system.rows, SVD_TOLERANCE)?;
        let cols = Arc::new(sparsify(&q, leaf_out.dim(), leaf_in.dim()));
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, cols.clone());
        Ok(cols)
    }

    /// Basis of equivariant maps `rep_in -> rep_out`.
    pub fn solve(&self, rep_in: &Rep, rep_out: &Rep) -> Result<EquivariantBasis> {
        let n = rep_in.dim().checked_mul(rep_out.dim());
        if n.map_or(true, |n| n > super::MAX_LAYER_ENTRIES) {
            return Err(Error::TooLarge(format!(
                "{}x{} layer exceeds {} entries",
                rep_out.dim(),
                rep_in.dim(),
                super::MAX_LAYER_ENTRIES
            )));
        }
        let ins = rep_in.leaves();
        let outs = rep_out.leaves();
        let mut blocks = Vec::new();
        let mut row = 0;
        for o in &outs {
            let mut col = 0;
            for i in &ins {
                let columns = self.leaf_pair(i, o)?;
                if !columns.is_empty() {
                    blocks.push(BasisBlock {
                        row_offset: row,
                        col_offset: col,
                        rows: o.dim(),
                        cols: i.dim(),
                        coord_offset: 0,
                        columns,
                    });
                }
                col += i.dim();
            }
            row += o.dim();
        }
        Ok(EquivariantBasis::from_blocks(rep_out.dim(), rep_in.dim(), blocks))
    }

    /// Basis of invariant bias vectors (`rho_out(g) b = b`), as maps `R -> rep_out`.
    pub fn bias(&self, rep_out: &Rep) -> Result<EquivariantBasis> {
        self.solve(&Rep::scalar(rep_out.base_dim()), rep_out)
    }
}

/// Basis of bias vectors fixed by every group element.
pub fn bias_basis(group: &GroupSpec, rep_out: &Rep) -> Result<EquivariantBasis> {
    BasisSolver::new(group.clone()).bias(rep_out)
}
