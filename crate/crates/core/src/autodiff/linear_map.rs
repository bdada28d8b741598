use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use crate::basis::EquivariantBasis;

/// A fixed linear embedding of `r` coordinates into `rows x cols` matrices,
/// together with its adjoint.
pub trait LinearMap: Debug + Send + Sync {
    fn coords(&self) -> usize;
    fn out_shape(&self) -> (usize, usize);
    /// Coordinates to a row-major matrix.
    fn expand(&self, beta: &[f64], out: &mut [f64]);
    /// Adjoint of [`LinearMap::expand`].
    fn contract(&self, w: &[f64], out: &mut [f64]);
}

impl LinearMap for EquivariantBasis {
    fn coords(&self) -> usize {
        self.rank()
    }

    fn out_shape(&self) -> (usize, usize) {
        (self.n_out(), self.n_in())
    }

    fn expand(&self, beta: &[f64], out: &mut [f64]) {
        self.expand_into(beta, out)
    }

    fn contract(&self, w: &[f64], out: &mut [f64]) {
        self.contract_into(w, out)
    }
}

/// Mixes `k_in` channels of dimension `d` into `k_out` channels:
/// coordinates are a row-major `k_out x k_in` matrix `M`, expanded to the
/// `(k_in d) x (k_out d)` matrix `M^T (x) I_d` acting on row vectors.
#[derive(Clone, Debug)]
pub struct ChannelMix {
    pub k_in: usize,
    pub k_out: usize,
    pub d: usize,
}

impl LinearMap for ChannelMix {
    fn coords(&self) -> usize {
        self.k_in * self.k_out
    }

    fn out_shape(&self) -> (usize, usize) {
        (self.k_in * self.d, self.k_out * self.d)
    }

    fn expand(&self, beta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let cols = self.k_out * self.d;
        for o in 0..self.k_out {
            for i in 0..self.k_in {
                let m = beta[o * self.k_in + i];
                for e in 0..self.d {
                    out[(i * self.d + e) * cols + o * self.d + e] = m;
                }
            }
        }
    }

    fn contract(&self, w: &[f64], out: &mut [f64]) {
        let cols = self.k_out * self.d;
        for o in 0..self.k_out {
            for i in 0..self.k_in {
                out[o * self.k_in + i] = (0..self.d)
                    .map(|e| w[(i * self.d + e) * cols + o * self.d + e])
                    .sum();
            }
        }
    }
}

/// Sparse three-index tensor defining `out[k] = sum M[k,i,j] x[i] y[j]`.
#[derive(Debug)]
pub struct BilinearForm {
    pub out_dim: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    pub entries: Vec<(u32, u32, u32, f64)>,
    wrt_x: OnceLock<Arc<BilinearForm>>,
    wrt_y: OnceLock<Arc<BilinearForm>>,
}

impl BilinearForm {
    pub fn new(out_dim: usize, x_dim: usize, y_dim: usize, entries: Vec<(u32, u32, u32, f64)>) -> Self {
        assert!(
            entries.iter().all(|&(k, i, j, _)| (k as usize) < out_dim
                && (i as usize) < x_dim
                && (j as usize) < y_dim),
            "bilinear entry out of range"
        );
        Self {
            out_dim,
            x_dim,
            y_dim,
            entries,
            wrt_x: OnceLock::new(),
            wrt_y: OnceLock::new(),
        }
    }

    /// Form `N[i,k,j] = M[k,i,j]`, so that `dx = N(g, y)`.
    pub fn wrt_x(&self) -> Arc<BilinearForm> {
        self.wrt_x
            .get_or_init(|| {
                let e = self.entries.iter().map(|&(k, i, j, v)| (i, k, j, v)).collect();
                Arc::new(BilinearForm::new(self.x_dim, self.out_dim, self.y_dim, e))
            })
            .clone()
    }

    /// Form `N[j,k,i] = M[k,i,j]`, so that `dy = N(g, x)`.
    pub fn wrt_y(&self) -> Arc<BilinearForm> {
        self.wrt_y
            .get_or_init(|| {
                let e = self.entries.iter().map(|&(k, i, j, v)| (j, k, i, v)).collect();
                Arc::new(BilinearForm::new(self.y_dim, self.out_dim, self.x_dim, e))
            })
            .clone()
    }
}
