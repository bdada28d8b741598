use nalgebra::DMatrix;
use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::repr::{GroupSpec, Rep};

/// `||a - b|| / (||a|| + ||b||)`, or 0 when both are zero.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na + nb;
    if denom == 0.0 {
        log::debug!("relative error of two zero vectors taken as 0");
        return 0.0;
    }
    (diff / denom).min(1.0)
}

/// Right-multiplies each row of `x` by `m^T`, i.e. applies `m` to every row.
fn act_rows(x: &Tensor, m: &DMatrix<f64>) -> Result<Tensor> {
    let (n, d) = x.dims2().ok_or_else(|| Error::Shape {
        op: "equivariance_error",
        lhs: x.shape().to_vec(),
        rhs: vec![],
    })?;
    if m.ncols() != d {
        return Err(Error::Shape {
            op: "equivariance_error",
            lhs: x.shape().to_vec(),
            rhs: vec![m.nrows(), m.ncols()],
        });
    }
    let xm = DMatrix::from_row_slice(n, d, x.data());
    let out = xm * m.transpose();
    Tensor::matrix(n, m.nrows(), out.transpose().as_slice().to_vec())
}

/// Per-row `RelErr(rho_out(g) f(x), f(rho_in(g) x))`, averaged over the rows
/// of `xs` (a `batch x dim(rep_in)` tensor).
pub fn equivariance_error<F>(f: F, xs: &Tensor, g: &DMatrix<f64>, rep_in: &Rep, rep_out: &Rep) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let y = f(xs)?;
    let gy = act_rows(&y, &rep_out.rho(g)?)?;
    let fgx = f(&act_rows(xs, &rep_in.rho(g)?)?)?;
    let (n, d) = gy.dims2().expect("matrix");
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..n)
        .map(|r| rel_err(&gy.data()[r * d..(r + 1) * d], &fgx.data()[r * d..(r + 1) * d]))
        .sum();
    Ok(total / n as f64)
}

/// [`equivariance_error`] averaged over `n_elements` sampled group elements.
pub fn mean_equivariance_error<F, R>(
    f: F,
    xs: &Tensor,
    group: &GroupSpec,
    rep_in: &Rep,
    rep_out: &Rep,
    n_elements: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
    R: Rng + ?Sized,
{
    if n_elements == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for _ in 0..n_elements {
        let g = group.sample_element(rng);
        total += equivariance_error(&f, xs, &g, rep_in, rep_out)?;
    }
    Ok(total / n_elements as f64)
}
