use nalgebra::DMatrix;

use super::group::GroupSpec;
use crate::error::{Error, Result};

/// Node kinds of a representation expression.
#[derive(Clone, Debug, PartialEq)]
pub enum RepKind {
    /// The group's defining representation.
    Base,
    /// One-dimensional trivial representation.
    Scalar,
    /// One-dimensional, `g -> det(g)`.
    Pseudoscalar,
    /// One-dimensional, `g -> det(g[start..start+len, start..start+len])`.
    /// Used for per-factor signs of product groups acting block-diagonally.
    BlockPseudoscalar { start: usize, len: usize },
    Sum(Vec<Rep>),
    Tensor(Vec<Rep>),
}

/// A representation expression over a group with a `base_dim`-dimensional
/// defining representation. The dimension is cached at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Rep {
    kind: RepKind,
    dim: usize,
    base_dim: usize,
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

impl Rep {
    pub fn base(base_dim: usize) -> Self {
        Self {
            kind: RepKind::Base,
            dim: base_dim,
            base_dim,
        }
    }

    pub fn scalar(base_dim: usize) -> Self {
        Self {
            kind: RepKind::Scalar,
            dim: 1,
            base_dim,
        }
    }

    pub fn pseudoscalar(base_dim: usize) -> Self {
        Self {
            kind: RepKind::Pseudoscalar,
            dim: 1,
            base_dim,
        }
    }

    pub fn block_pseudoscalar(base_dim: usize, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > base_dim {
            return Err(Error::Dimension(format!(
                "block [{start}:{}] outside base dimension {base_dim}",
                start + len
            )));
        }
        Ok(Self {
            kind: RepKind::BlockPseudoscalar { start, len },
            dim: 1,
            base_dim,
        })
    }

    pub fn sum(parts: Vec<Rep>) -> Result<Self> {
        Self::compound(parts, false)
    }

    pub fn tensor(parts: Vec<Rep>) -> Result<Self> {
        Self::compound(parts, true)
    }

    fn compound(parts: Vec<Rep>, tensor: bool) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("empty sum or tensor expression".into()))?;
        if parts.len() == 1 {
            return Ok(parts.into_iter().next().expect("one part"));
        }
        let base_dim = first.base_dim;
        if parts.iter().any(|p| p.base_dim != base_dim) {
            return Err(Error::Dimension(
                "representations over different base dimensions".into(),
            ));
        }
        let dim = if tensor {
            parts.iter().map(|p| p.dim).product()
        } else {
            parts.iter().map(|p| p.dim).sum()
        };
        let kind = if tensor {
            RepKind::Tensor(parts)
        } else {
            RepKind::Sum(parts)
        };
        Ok(Self {
            kind,
            dim,
            base_dim,
        })
    }

    /// `k` copies of `self` concatenated.
    pub fn power(&self, k: usize) -> Result<Self> {
        Self::sum(vec![self.clone(); k])
    }

    pub fn kind(&self) -> &RepKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// True for representations on which every group element acts trivially
    /// by construction (scalars and sums of scalars).
    pub fn is_trivial(&self) -> bool {
        match &self.kind {
            RepKind::Scalar => true,
            RepKind::Sum(parts) | RepKind::Tensor(parts) => parts.iter().all(Rep::is_trivial),
            _ => false,
        }
    }

    /// Non-sum summands in order, with nested sums flattened.
    pub fn leaves(&self) -> Vec<&Rep> {
        match &self.kind {
            RepKind::Sum(parts) => parts.iter().flat_map(|p| p.leaves()).collect(),
            _ => vec![self],
        }
    }

    fn check_element(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.nrows() != self.base_dim || m.ncols() != self.base_dim {
            return Err(Error::Dimension(format!(
                "group element is {}x{}, representation expects {}x{}",
                m.nrows(),
                m.ncols(),
                self.base_dim,
                self.base_dim
            )));
        }
        Ok(())
    }

    /// `rho(g)` for a group element given in the defining representation.
    pub fn rho(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_element(g)?;
        Ok(self.rho_unchecked(g))
    }

    fn rho_unchecked(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            RepKind::Base => g.clone(),
            RepKind::Scalar => DMatrix::identity(1, 1),
            RepKind::Pseudoscalar => DMatrix::from_element(1, 1, g.determinant()),
            RepKind::BlockPseudoscalar { start, len } => {
                let block = g.view((*start, *start), (*len, *len)).clone_owned();
                DMatrix::from_element(1, 1, block.determinant())
            }
            RepKind::Sum(parts) => {
                let blocks: Vec<_> = parts.iter().map(|p| p.rho_unchecked(g)).collect();
                block_diag(&blocks)
            }
            RepKind::Tensor(parts) => parts
                .iter()
                .map(|p| p.rho_unchecked(g))
                .reduce(|acc, m| acc.kronecker(&m))
                .expect("tensor has parts"),
        }
    }

    /// Lie-algebra image `d rho(A)`.
    pub fn drho(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_element(a)?;
        Ok(self.drho_unchecked(a))
    }

    fn drho_unchecked(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            RepKind::Base => a.clone(),
            RepKind::Scalar => DMatrix::zeros(1, 1),
            RepKind::Pseudoscalar => DMatrix::from_element(1, 1, a.trace()),
            RepKind::BlockPseudoscalar { start, len } => {
                DMatrix::from_element(1, 1, a.view((*start, *start), (*len, *len)).trace())
            }
            RepKind::Sum(parts) => {
                let blocks: Vec<_> = parts.iter().map(|p| p.drho_unchecked(a)).collect();
                block_diag(&blocks)
            }
            RepKind::Tensor(parts) => {
                // d(r1 x r2) = dr1 x I + I x dr2, folded left to right.
                let mut acc = parts[0].drho_unchecked(a);
                let mut acc_dim = parts[0].dim;
                for p in &parts[1..] {
                    let d = p.drho_unchecked(a);
                    acc = acc.kronecker(&DMatrix::identity(p.dim, p.dim))
                        + DMatrix::<f64>::identity(acc_dim, acc_dim).kronecker(&d);
                    acc_dim *= p.dim;
                }
                acc
            }
        }
    }
}

/// `rho(g)` with dimension checking.
pub fn rho_of(rep: &Rep, element: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    rep.rho(element)
}

/// `d rho(A)`; fails for groups with no Lie algebra.
pub fn drho_of(group: &GroupSpec, rep: &Rep, lie_gen: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if group.is_finite() {
        return Err(Error::NoLieAlgebra(format!(
            "d rho for finite group {}",
            group.name()
        )));
    }
    rep.drho(lie_gen)
}
