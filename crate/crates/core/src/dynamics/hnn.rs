use super::pendulum::{TrajectoryChunk, STATE_DIM};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{rel_err, Model};

/// Per-coordinate multipliers applied to states before they reach the
/// Hamiltonian network. Uniform within each 3-vector block, so the scaling
/// commutes with any group acting on the blocks.
pub fn block_input_scale(steps: &[Tensor]) -> Vec<f64> {
    let mut sq = [0.0; STATE_DIM / 3];
    let mut count = 0usize;
    for t in steps {
        for row in t.data().chunks(STATE_DIM) {
            for (b, block) in row.chunks(3).enumerate() {
                sq[b] += block.iter().map(|v| v * v).sum::<f64>() / 3.0;
            }
            count += 1;
        }
    }
    sq.iter()
        .flat_map(|&s| {
            let rms = (s / count.max(1) as f64).sqrt();
            let inv = if rms > 0.0 { 1.0 / rms } else { 1.0 };
            [inv; 3]
        })
        .collect()
}

fn scaled_input(tape: &mut Tape, z: Var, input_scale: &[f64]) -> Result<Var> {
    if input_scale.is_empty() {
        return Ok(z);
    }
    let n = tape.shape(z)[0];
    let row = tape.leaf(Tensor::row(input_scale.to_vec()));
    let rows = tape.broadcast_rows(row, n)?;
    tape.mul(z, rows)
}

/// Learned Hamiltonian dynamics for a `batch x 12` state, with
/// `H(z) = model(z * input_scale)` (an empty scale means none). The
/// gradient of `sum_b H(z_b)` is recorded on the tape, so the result can be
/// differentiated again with respect to the model parameters.
pub fn hnn_dynamics(tape: &mut Tape, model: &Model, vars: &[Var], z: Var, input_scale: &[f64]) -> Result<Var> {
    let zin = scaled_input(tape, z, input_scale)?;
    let h = model.forward(tape, vars, zin)?;
    let total = tape.sum(h);
    let dh = tape.grad(total, &[z])?[0];
    let dh_dp = tape.slice_cols(dh, 6, 6)?;
    let dh_dx = tape.slice_cols(dh, 0, 6)?;
    let neg = tape.neg(dh_dx);
    tape.concat(&[dh_dp, neg])
}

/// RK4 rollout on the tape: returns the `steps` states after `z0`.
pub fn rollout_var<F>(tape: &mut Tape, z0: Var, dt: f64, steps: usize, mut f: F) -> Result<Vec<Var>>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let mut out = Vec::with_capacity(steps);
    let mut z = z0;
    for _ in 0..steps {
        let k1 = f(tape, z)?;
        let s1 = tape.scale(k1, dt / 2.0);
        let z1 = tape.add(z, s1)?;
        let k2 = f(tape, z1)?;
        let s2 = tape.scale(k2, dt / 2.0);
        let z2 = tape.add(z, s2)?;
        let k3 = f(tape, z2)?;
        let s3 = tape.scale(k3, dt);
        let z3 = tape.add(z, s3)?;
        let k4 = f(tape, z3)?;
        let k23 = tape.add(k2, k3)?;
        let k23 = tape.scale(k23, 2.0);
        let k14 = tape.add(k1, k4)?;
        let sum = tape.add(k14, k23)?;
        let incr = tape.scale(sum, dt / 6.0);
        z = tape.add(z, incr)?;
        out.push(z);
    }
    Ok(out)
}

/// Stacks chunks step-wise: element `k` is the `n x 12` tensor of every
/// chunk's state `k`.
pub fn stack_steps(chunks: &[TrajectoryChunk]) -> Result<Vec<Tensor>> {
    let len = chunks.first().map_or(0, |c| c.states.len());
    if chunks.iter().any(|c| c.states.len() != len || c.states.iter().any(|s| s.len() != STATE_DIM)) {
        return Err(Error::Data("chunks have inconsistent shapes".into()));
    }
    (0..len)
        .map(|k| {
            let data = chunks.iter().flat_map(|c| c.states[k].iter().copied()).collect();
            Tensor::matrix(chunks.len(), STATE_DIM, data)
        })
        .collect()
}

/// Mean squared error between the learned rollout from each chunk's first
/// state and the chunk's remaining states, averaged over steps,
/// coordinates and chunks.
pub fn hnn_rollout_loss_var(
    tape: &mut Tape,
    model: &Model,
    vars: &[Var],
    steps: &[Tensor],
    dt: f64,
    input_scale: &[f64],
) -> Result<Var> {
    let (first, rest) = steps
        .split_first()
        .ok_or_else(|| Error::Data("empty trajectory batch".into()))?;
    let z0 = tape.leaf(first.clone());
    let pred = rollout_var(tape, z0, dt, rest.len(), |t, z| hnn_dynamics(t, model, vars, z, input_scale))?;
    let mut total = tape.leaf(Tensor::scalar(0.0));
    for (p, target) in pred.iter().zip(rest) {
        let tv = tape.leaf(target.clone());
        let r = tape.sub(*p, tv)?;
        let sq = tape.square(r);
        let m = tape.mean(sq);
        total = tape.add(total, m)?;
    }
    Ok(tape.scale(total, 1.0 / rest.len().max(1) as f64))
}

/// [`hnn_rollout_loss_var`] evaluated at the model's current parameters.
pub fn hnn_rollout_loss(model: &Model, chunks: &[TrajectoryChunk], input_scale: &[f64]) -> Result<f64> {
    let steps = stack_steps(chunks)?;
    let dt = chunks.first().map_or(0.0, |c| c.dt);
    let mut tape = Tape::new();
    let vars: Vec<Var> = model.params().iter().map(|p| tape.leaf(p.value.clone())).collect();
    let loss = hnn_rollout_loss_var(&mut tape, model, &vars, &steps, dt, input_scale)?;
    Ok(tape.value(loss).item())
}

/// Geometric mean over steps `t >= 1` of `RelErr(pred_t, true_t)`, in percent.
pub fn rollout_relative_error(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            op: "rollout_relative_error",
            lhs: vec![pred.len()],
            rhs: vec![truth.len()],
        });
    }
    let errs: Vec<f64> = pred.iter().zip(truth).skip(1).map(|(p, t)| rel_err(p, t)).collect();
    if errs.is_empty() {
        return Ok(0.0);
    }
    if errs.iter().any(|&e| e == 0.0) {
        return Ok(0.0);
    }
    let mean_log = errs.iter().map(|e| e.ln()).sum::<f64>() / errs.len() as f64;
    Ok(100.0 * mean_log.exp())
}
