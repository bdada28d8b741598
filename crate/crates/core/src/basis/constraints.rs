use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::repr::{GroupSpec, Rep};

/// Refuse layers with more entries than this; the solver is dense.
pub const MAX_LAYER_ENTRIES: usize = 1_000_000;

/// Which generator produced a group of constraint rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBlock {
    pub source: String,
    pub row_start: usize,
    pub row_count: usize,
}

/// Stacked linear constraints `C vec(W) = 0` on column-major `vec(W)`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub rows: DMatrix<f64>,
    pub provenance: Vec<ConstraintBlock>,
    pub n_in: usize,
    pub n_out: usize,
}

impl ConstraintSystem {
    /// Same system with its generator blocks stacked in a different order.
    pub fn permuted_blocks(&self, order: &[usize]) -> Self {
        let n = self.n_in * self.n_out;
        let total: usize = self.provenance.iter().map(|b| b.row_count).sum();
        let mut rows = DMatrix::zeros(total, n);
        let mut provenance = Vec::with_capacity(order.len());
        let mut at = 0;
        for &i in order {
            let b = &self.provenance[i];
            rows.view_mut((at, 0), (b.row_count, n))
                .copy_from(&self.rows.view((b.row_start, 0), (b.row_count, n)));
            provenance.push(ConstraintBlock {
                source: b.source.clone(),
                row_start: at,
                row_count: b.row_count,
            });
            at += b.row_count;
        }
        Self {
            rows,
            provenance,
            n_in: self.n_in,
            n_out: self.n_out,
        }
    }
}

/// Builds the equivariance constraints for maps `rep_in -> rep_out`.
///
/// Discrete generator `h`: `(rho_in(h)^-T (x) rho_out(h)) - I`.
/// Lie generator `A`: `(I (x) drho_out(A)) - (drho_in(A)^T (x) I)`.
pub fn build_constraints(group: &GroupSpec, rep_in: &Rep, rep_out: &Rep) -> Result<ConstraintSystem> {
    let (n_in, n_out) = (rep_in.dim(), rep_out.dim());
    if rep_in.base_dim() != group.base_dim() || rep_out.base_dim() != group.base_dim() {
        return Err(Error::Dimension(format!(
            "representations are over R^{}/R^{} but {} acts on R^{}",
            rep_in.base_dim(),
            rep_out.base_dim(),
            group.name(),
            group.base_dim()
        )));
    }
    let n = n_in
        .checked_mul(n_out)
        .filter(|&n| n <= MAX_LAYER_ENTRIES)
        .ok_or_else(|| {
            Error::TooLarge(format!(
                "{n_out}x{n_in} layer exceeds {MAX_LAYER_ENTRIES} entries"
            ))
        })?;

    let mut blocks: Vec<(String, DMatrix<f64>)> = Vec::new();
    for (i, h) in group.discrete_generators().iter().enumerate() {
        let r_in = rep_in.rho(h)?;
        let r_out = rep_out.rho(h)?;
        let inv_t = r_in
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("rho_in of generator {i} is singular")))?
            .transpose();
        let block = inv_t.kronecker(&r_out) - DMatrix::<f64>::identity(n, n);
        blocks.push((format!("discrete[{i}]"), block));
    }
    for (i, a) in group.lie_generators().iter().enumerate() {
        let d_in = rep_in.drho(a)?;
        let d_out = rep_out.drho(a)?;
        let block = DMatrix::<f64>::identity(n_in, n_in).kronecker(&d_out)
            - d_in.transpose().kronecker(&DMatrix::<f64>::identity(n_out, n_out));
        blocks.push((format!("lie[{i}]"), block));
    }

    let total = blocks.iter().map(|(_, b)| b.nrows()).sum();
    let mut rows = DMatrix::zeros(total, n);
    let mut provenance = Vec::with_capacity(blocks.len());
    let mut at = 0;
    for (source, b) in blocks {
        rows.view_mut((at, 0), (b.nrows(), n)).copy_from(&b);
        provenance.push(ConstraintBlock {
            source,
            row_start: at,
            row_count: b.nrows(),
        });
        at += b.nrows();
    }
    Ok(ConstraintSystem {
        rows,
        provenance,
        n_in,
        n_out,
    })
}
