use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::layers::Param;

/// First and second moment estimates of Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Param]) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[Param], beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update. Fails without touching any parameter if
/// a gradient has the wrong size or a non-finite entry.
pub fn adam_step(params: &mut [Param], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.len() != g.len() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.value.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *w -= lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Learning rate after `epoch` of `epochs` under cosine decay to zero.
pub fn cosine_lr(lr: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr;
    }
    0.5 * lr * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
}
