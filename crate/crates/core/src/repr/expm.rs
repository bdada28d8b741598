use nalgebra::DMatrix;

const TAYLOR_TERMS: usize = 18;
const SCALED_NORM: f64 = 0.5;

/// Induced 1-norm (max absolute column sum).
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 0.5, the
/// 18-term series is summed with Horner's rule, and the result squared `s`
/// times.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm of non-square matrix");
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    let eye = DMatrix::<f64>::identity(n, n);
    let mut acc = eye.clone();
    for k in (1..=TAYLOR_TERMS).rev() {
        acc = &eye + (&scaled * acc) / k as f64;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}
