use crate::error::{Error, Result};

/// One classic fourth-order Runge-Kutta step.
pub fn rk4_step<F>(f: &F, z: &[f64], dt: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { z.iter().zip(k).map(|(zi, ki)| zi + a * ki).collect() };
    let k1 = f(z);
    let k2 = f(&axpy(dt / 2.0, &k1));
    let k3 = f(&axpy(dt / 2.0, &k2));
    let k4 = f(&axpy(dt, &k3));
    (0..z.len())
        .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates `z' = f(z)` with fixed step `dt`, returning `steps + 1` states
/// starting with `z0`. Fails on the first non-finite state.
pub fn integrate_rk4<F>(f: F, z0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z0.to_vec());
    for step in 1..=steps {
        let next = rk4_step(&f, out.last().expect("nonempty"), dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(step));
        }
        out.push(next);
    }
    Ok(out)
}
