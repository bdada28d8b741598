use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::EquivariantBasis;
use crate::error::{Error, Result};

/// Draws `W = reshape(Q beta) + B` with `beta ~ N(0, sigma_a2 I)` and
/// i.i.d. `N(0, sigma_b2)` entries in `B`.
pub fn sample_prior_weight<R: Rng + ?Sized>(
    basis: &EquivariantBasis,
    sigma_a2: f64,
    sigma_b2: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if sigma_a2 < 0.0 || sigma_b2 < 0.0 {
        return Err(Error::Config(format!(
            "prior variances must be non-negative, got {sigma_a2} and {sigma_b2}"
        )));
    }
    let (sa, sb) = (sigma_a2.sqrt(), sigma_b2.sqrt());
    let beta = DVector::from_fn(basis.rank(), |_, _| sa * rng.sample::<f64, _>(StandardNormal));
    let b = DMatrix::from_fn(basis.n_out(), basis.n_in(), |_, _| {
        sb * rng.sample::<f64, _>(StandardNormal)
    });
    Ok(basis.expand(&beta) + b)
}

/// The `(beta, B)` with `reshape(Q beta) + B = W` that minimizes
/// `||beta||^2 / (2 sigma_a2) + ||B||^2 / (2 sigma_b2)`:
/// `beta = sigma_a2 / (sigma_a2 + sigma_b2) Q^T vec(W)`.
pub fn min_norm_split(
    basis: &EquivariantBasis,
    w: &DMatrix<f64>,
    sigma_a2: f64,
    sigma_b2: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if w.nrows() != basis.n_out() || w.ncols() != basis.n_in() {
        return Err(Error::Shape {
            op: "min_norm_split",
            lhs: vec![basis.n_out(), basis.n_in()],
            rhs: vec![w.nrows(), w.ncols()],
        });
    }
    let beta = basis.contract(w) * (sigma_a2 / (sigma_a2 + sigma_b2));
    let b = w - basis.expand(&beta);
    Ok((beta, b))
}
