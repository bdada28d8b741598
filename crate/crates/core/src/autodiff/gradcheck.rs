use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_abs_error: f64,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_error: f64,
}

/// Number of coordinates checked per call at most.
pub const MAX_CHECKED: usize = 200;

/// Checks the gradient of the scalar `f(tape, inputs)` at `inputs` against
/// central differences with step `1e-5 * max(1, |theta|)`. At most
/// [`MAX_CHECKED`] coordinates are checked, sampled with `seed`.
pub fn finite_diff_check<F>(inputs: &[Tensor], seed: u64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.grad(out, &vars)?;
    let analytic: Vec<Tensor> = grads.iter().map(|&g| tape.value(g).clone()).collect();

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(t, x)| (0..x.len()).map(move |i| (t, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if coords.len() > MAX_CHECKED {
        let mut v = sample(&mut rng, coords.len(), MAX_CHECKED).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..coords.len()).collect()
    };

    let mut report = GradCheck {
        checked: picked.len(),
        max_abs_error: 0.0,
        max_rel_error: 0.0,
    };
    let mut values = inputs.to_vec();
    for idx in picked {
        let (t, i) = coords[idx];
        let theta = inputs[t].data()[i];
        let h = 1e-5 * theta.abs().max(1.0);
        values[t].data_mut()[i] = theta + h;
        let plus = eval(&values)?;
        values[t].data_mut()[i] = theta - h;
        let minus = eval(&values)?;
        values[t].data_mut()[i] = theta;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[t].data()[i];
        let err = (a - numeric).abs();
        report.max_abs_error = report.max_abs_error.max(err);
        report.max_rel_error = report
            .max_rel_error
            .max(err / a.abs().max(numeric.abs()).max(1e-3));
    }
    Ok(report)
}
