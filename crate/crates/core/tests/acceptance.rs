//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 are exact properties and fail the run. Criteria 8-12 are
//! statistical reproductions; their failures are reported but only fail the
//! run with `RPP_ACCEPTANCE_STRICT=1`. `RPP_ACCEPTANCE_ONLY=1,4,8` restricts
//! the run to a subset.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rpp_core::autodiff::{finite_diff_check, Tape, Tensor, Var};
use rpp_core::basis::{BasisSolver, EquivariantBasis};
use rpp_core::dynamics::{
    block_input_scale, gen_inertia, gen_pendulum, hnn_rollout_loss_var, integrate_rk4, modified_inertia_witness,
    sample_initial_state, stack_steps, wind_witness, z_rotation, HamiltonianSystem, INERTIA_POINTS,
};
use rpp_core::harness::{
    ensemble, prior_grid, run_regimes, ExperimentConfig, Family, Regime, RegimeRow, Task, CHUNK_DT, CHUNK_LEN,
    DEFAULT_GRID,
};
use rpp_core::layers::{sample_prior_weight, ConvSpec, Model, ModelKind, ModelSpec};
use rpp_core::repr::{catalog_entry, parse_rep, GroupSpec, Rep};

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    statistical: bool,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "basis correctness", statistical: false, run: basis_correctness },
    Criterion { id: 2, name: "commutant oracle", statistical: false, run: commutant_oracle },
    Criterion { id: 3, name: "prior covariance", statistical: false, run: prior_covariance },
    Criterion { id: 4, name: "gradient checks", statistical: false, run: gradient_checks },
    Criterion { id: 5, name: "conv oracle", statistical: false, run: conv_oracle },
    Criterion { id: 6, name: "symmetry witnesses", statistical: false, run: symmetry_witnesses },
    Criterion { id: 7, name: "integrator order", statistical: false, run: integrator_order },
    Criterion { id: 8, name: "exact symmetry", statistical: true, run: exact_symmetry },
    Criterion { id: 9, name: "approximate symmetry", statistical: true, run: approximate_symmetry },
    Criterion { id: 10, name: "misspecified symmetry", statistical: true, run: misspecified_symmetry },
    Criterion { id: 11, name: "posterior equivariance shift", statistical: true, run: posterior_shift },
    Criterion { id: 12, name: "prior-variance robustness", statistical: true, run: prior_robustness },
];

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("RPP_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("RPP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut fatal = 0;
    for c in CRITERIA.iter().filter(|c| only.as_ref().map_or(true, |o| o.contains(&c.id))) {
        let start = Instant::now();
        let outcome = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {:>2} {tag} {} ({secs:.1}s): {detail}", c.id, c.name);
        if outcome.is_err() && (strict || !c.statistical) {
            fatal += 1;
        }
    }
    if fatal > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// 1. Basis correctness

/// Worst relative commutation error of random basis combinations, and the
/// deviation of `Q^T Q` from the identity.
fn basis_errors(
    group: &GroupSpec,
    basis: &EquivariantBasis,
    rin: &Rep,
    rout: &Rep,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), String> {
    // Blocks have disjoint supports, so Q^T Q is block diagonal.
    let mut ortho: f64 = 0.0;
    for b in basis.blocks() {
        let mut q = DMatrix::<f64>::zeros(b.rows * b.cols, b.rank());
        for (k, col) in b.columns.iter().enumerate() {
            for &(r, c, v) in col {
                q[(c as usize * b.rows + r as usize, k)] = v;
            }
        }
        let gram = q.transpose() * &q - DMatrix::<f64>::identity(b.rank(), b.rank());
        ortho = ortho.max(gram.abs().max());
    }
    if basis.rank() == 0 {
        return Ok((0.0, ortho));
    }
    let w = basis.random_element(rng);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g = group.sample_element(rng);
        let lhs = rout.rho(&g).map_err(err)? * &w;
        let rhs = &w * rin.rho(&g).map_err(err)?;
        worst = worst.max((lhs - rhs).norm() / w.norm());
    }
    Ok((worst, ortho))
}

/// The (input, output) representation pairs of every linear layer of a model.
fn layer_pairs(spec: &ModelSpec) -> Result<Vec<(Rep, Rep)>, String> {
    let (rin, rout) = spec.reps().map_err(err)?;
    let layout = spec.hidden_layout().map_err(err)?;
    let (hidden, preact) = (layout.hidden_rep().map_err(err)?, layout.preact_rep().map_err(err)?);
    Ok(vec![(rin, preact.clone()), (hidden.clone(), preact), (hidden, rout)])
}

fn basis_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut pairs: Vec<(String, GroupSpec, Rep, Rep)> = Vec::new();
    let archs = [
        ("O(3)", "(R+V)^5", "V*V"),
        ("SL(3)", "(R+V)^5", "V*V"),
        ("O(2)z", "V^4", "R"),
        ("SO(2)z", "V^4", "R"),
        ("SO(3)", "V^4", "R"),
    ];
    for (group, rin, rout) in archs {
        let spec = ModelSpec::new(ModelKind::Emlp, group, rin, rout).with_width(128);
        let g = spec.group_spec().map_err(err)?;
        for (a, b) in layer_pairs(&spec)? {
            pairs.push((format!("{group} {a}->{b}"), g.clone(), a, b));
        }
    }
    for env in ["Hopper", "Swimmer", "HalfCheetah", "Walker2d", "Ant", "Humanoid"] {
        let e = catalog_entry(env).map_err(err)?;
        pairs.push((format!("{env} state->action"), e.group.clone(), e.state_rep.clone(), e.action_rep.clone()));
        pairs.push((format!("{env} state->state"), e.group.clone(), e.state_rep.clone(), e.state_rep.clone()));
    }
    let mut solvers: HashMap<String, BasisSolver> = HashMap::new();
    let (mut worst, mut worst_ortho) = (0.0f64, 0.0f64);
    let mut worst_name = String::new();
    for (name, group, rin, rout) in &pairs {
        let solver = solvers
            .entry(group.name().to_string())
            .or_insert_with(|| BasisSolver::new(group.clone()));
        let basis = solver.solve(rin, rout).map_err(|e| format!("{name}: {e}"))?;
        let (e, o) = basis_errors(group, &basis, rin, rout, &mut rng)?;
        if e > worst {
            worst = e;
            worst_name = name.clone();
        }
        worst_ortho = worst_ortho.max(o);
    }
    check(
        worst < 1e-6 && worst_ortho < 1e-10,
        format!(
            "{} pairs, max commutation error {worst:.2e} ({worst_name}), max |Q^T Q - I| {worst_ortho:.2e}",
            pairs.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Commutant oracle

/// Dimension of the commutant by full enumeration: the trace of the group
/// average of `rho_in(g) (x) rho_out(g)`, which projects onto the invariants.
fn enumerated_rank(elements: &[DMatrix<f64>], rin: &Rep, rout: &Rep) -> Result<usize, String> {
    let n = rin.dim() * rout.dim();
    let mut avg = DMatrix::<f64>::zeros(n, n);
    for g in elements {
        avg += rin.rho(g).map_err(err)?.kronecker(&rout.rho(g).map_err(err)?);
    }
    avg /= elements.len() as f64;
    let tr = avg.trace();
    if (tr - tr.round()).abs() > 1e-9 {
        return Err(format!("non-integer projector trace {tr}"));
    }
    Ok(tr.round() as usize)
}

fn commutant_oracle() -> Outcome {
    let texts = ["V", "R+V", "V+P", "V*V", "V^2+R", "P+R^2", "V*V+V", "V*V*V", "(R+P)^3+V", "V^3+P", "V*V+V*V+R"];
    let mut compared = 0;
    for group in [GroupSpec::z2(), GroupSpec::z4(), GroupSpec::z2xz2(), GroupSpec::d4()] {
        let d = group.base_dim();
        let elements = group.enumerate(64).ok_or("finite group failed to close")?;
        let reps: Vec<Rep> = texts
            .iter()
            .filter_map(|t| parse_rep(t, d).ok())
            .filter(|r| r.dim() <= 12)
            .collect();
        let solver = BasisSolver::new(group.clone());
        for rin in &reps {
            for rout in &reps {
                let got = solver.solve(rin, rout).map_err(err)?.rank();
                let want = enumerated_rank(&elements, rin, rout)?;
                if got != want {
                    return Err(format!("{} {rin}->{rout}: solver {got}, enumeration {want}", group.name()));
                }
                compared += 1;
            }
        }
    }
    let known = [
        (GroupSpec::so2(), 2, 2usize),
        (GroupSpec::o2(), 2, 1),
        (GroupSpec::so3(), 3, 1),
    ];
    for (g, d, want) in known {
        let got = BasisSolver::new(g.clone()).solve(&Rep::base(d), &Rep::base(d)).map_err(err)?.rank();
        if got != want {
            return Err(format!("{} V->V: rank {got}, expected {want}", g.name()));
        }
    }
    Ok(format!("{compared} finite-group pairs match enumeration; SO(2)=2, O(2)=1, SO(3)=1"))
}

// ---------------------------------------------------------------------------
// 3. Prior covariance

fn prior_covariance() -> Outcome {
    let group = GroupSpec::so3();
    let (rin, rout) = (Rep::base(3), Rep::base(3));
    let basis = BasisSolver::new(group).solve(&rin, &rout).map_err(err)?;
    let q = basis.dense_q();
    let proj = &q * q.transpose();
    let n = proj.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let draws = 40_000;
    let mut worst: f64 = 0.0;
    for (sa, sb) in [(3.0, 0.5), (1.0, 1.0), (0.2, 2.0)] {
        let mut second = DMatrix::<f64>::zeros(n, n);
        for _ in 0..draws {
            let w = sample_prior_weight(&basis, sa, sb, &mut rng).map_err(err)?;
            // Column-major vec(W), matching the row index of Q.
            let v = DVector::from_column_slice(w.as_slice());
            second += &v * v.transpose();
        }
        second /= draws as f64;
        let want = &proj * (sa + sb) + (&eye - &proj) * sb;
        worst = worst.max((second - &want).norm() / want.norm());
    }
    check(worst < 0.05, format!("{draws} draws per setting, max relative Frobenius error {worst:.4}"))
}

// ---------------------------------------------------------------------------
// 4. Gradient checks

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).expect("sized")
}

fn randomized(spec: &ModelSpec, seed: u64) -> Result<Model, String> {
    let mut model = Model::build(spec, seed).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(model)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let conv = ModelSpec::conv(ConvSpec {
        height: 4,
        width: 4,
        channels: 1,
        hidden_channels: 2,
        outputs: 2,
    })
    .with_depth(2);
    let specs = [
        ModelSpec::new(ModelKind::Mlp, "O(3)", "(R+V)^5", "V*V").with_width(24).with_depth(2),
        ModelSpec::new(ModelKind::Emlp, "O(3)", "(R+V)^5", "V*V").with_width(60).with_depth(2),
        ModelSpec::new(ModelKind::Rpp, "O(3)", "(R+V)^5", "V*V").with_width(60).with_depth(2),
        conv,
    ];
    let mut parts = Vec::new();
    for spec in &specs {
        let model = randomized(spec, 5)?;
        let x = randn(&mut rng, 4, model.n_in());
        let y = randn(&mut rng, 4, model.n_out());
        let params: Vec<Tensor> = model.params().iter().map(|p| p.value.clone()).collect();
        let c = finite_diff_check(&params, 6, |t: &mut Tape, v: &[Var]| {
            let xv = t.leaf(x.clone());
            let yv = t.leaf(y.clone());
            let out = model.forward(t, v, xv)?;
            let r = t.sub(out, yv)?;
            let sq = t.square(r);
            let mse = t.mean(sq);
            let prior = model.prior_penalty_var(t, v)?;
            t.add(mse, prior)
        })
        .map_err(err)?;
        if c.max_rel_error >= 1e-4 {
            return Err(format!("{}: max relative error {:.2e}", spec.kind.name(), c.max_rel_error));
        }
        parts.push(format!("{} {:.1e}", spec.kind.name(), c.max_rel_error));
    }
    let sys = HamiltonianSystem::windy();
    let hnn = ModelSpec::new(ModelKind::Rpp, "O(2)z", "V^4", "R").with_width(30).with_depth(2);
    let model = randomized(&hnn, 7)?;
    let params: Vec<Tensor> = model.params().iter().map(|p| p.value.clone()).collect();
    for (len, tol, label) in [(2, 1e-4, "hnn 1-step"), (CHUNK_LEN, 1e-3, "hnn rollout")] {
        let data = gen_pendulum(&sys, 3, 0, 8, CHUNK_DT, len).map_err(err)?;
        let steps = stack_steps(&data.train).map_err(err)?;
        let scale = block_input_scale(&steps);
        let c = finite_diff_check(&params, 9, |t: &mut Tape, v: &[Var]| {
            hnn_rollout_loss_var(t, &model, v, &steps, CHUNK_DT, &scale)
        })
        .map_err(err)?;
        if c.max_rel_error >= tol {
            return Err(format!("{label}: max relative error {:.2e}", c.max_rel_error));
        }
        parts.push(format!("{label} {:.1e}", c.max_rel_error));
    }
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------------------
// 5. Conv oracle

/// Zero-padded 3x3 cross-correlation of one channel.
fn correlate(img: &[f64], h: usize, w: usize, filt: &[f64; 9]) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (sy, sx) = (y + dy, x + dx);
                    if (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx) {
                        acc += filt[((dy + 1) * 3 + dx + 1) as usize] * img[sy as usize * w + sx as usize];
                    }
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

fn conv_oracle() -> Outcome {
    let (h, w, c_in, c_out) = (5, 6, 2, 3);
    let spec = ModelSpec::conv(ConvSpec {
        height: h,
        width: w,
        channels: c_in,
        hidden_channels: c_out,
        outputs: 2,
    })
    .with_depth(1);
    let mut model = randomized(&spec, 11)?;
    model.param_mut("l0.b_w").ok_or("no free weight in first layer")?.value.data_mut().fill(0.0);
    let weight = model.effective_weight(0).map_err(err)?;
    // Filters read off at an interior pixel (2, 2).
    let centre = 2 * w + 2;
    let filters: Vec<[f64; 9]> = (0..c_out * c_in)
        .map(|k| {
            let (co, ci) = (k / c_in, k % c_in);
            let mut f = [0.0; 9];
            for (t, tap) in f.iter_mut().enumerate() {
                let (dy, dx) = (t / 3, t % 3);
                let src = centre + dy * w + dx - w - 1;
                *tap = weight[(co * h * w + centre, ci * h * w + src)];
            }
            f
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let img: Vec<f64> = (0..c_in * h * w).map(|_| rng.sample(StandardNormal)).collect();
        let out = &weight * DVector::from_column_slice(&img);
        for co in 0..c_out {
            let mut want = vec![0.0; h * w];
            for ci in 0..c_in {
                let part = correlate(&img[ci * h * w..(ci + 1) * h * w], h, w, &filters[co * c_in + ci]);
                want.iter_mut().zip(part).for_each(|(a, b)| *a += b);
            }
            for p in 0..h * w {
                worst = worst.max((out[co * h * w + p] - want[p]).abs());
            }
        }
    }
    check(worst < 1e-12, format!("10 random {c_in}x{h}x{w} images, max deviation {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 6. Symmetry witnesses

fn inertia_oracle(row: &[f64]) -> Matrix3<f64> {
    let mut i = Matrix3::zeros();
    for p in 0..INERTIA_POINTS {
        let m = row[4 * p];
        let x = Vector3::new(row[4 * p + 1], row[4 * p + 2], row[4 * p + 3]);
        i += (Matrix3::identity() * x.dot(&x) - x * x.transpose()) * m;
    }
    i
}

fn modified_oracle(row: &[f64]) -> Matrix3<f64> {
    let i = inertia_oracle(row);
    let z = Vector3::z();
    i + i * i * z * z.transpose() * i * 0.3
}

fn rotate_row(row: &[f64], r: &Matrix3<f64>) -> Vec<f64> {
    let mut out = row.to_vec();
    for p in 0..INERTIA_POINTS {
        let x = r * Vector3::new(row[4 * p + 1], row[4 * p + 2], row[4 * p + 3]);
        out[4 * p + 1..4 * p + 4].copy_from_slice(x.as_slice());
    }
    out
}

fn random_orthogonal(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    if rng.gen_bool(0.5) {
        -q
    } else {
        q
    }
}

fn symmetry_witnesses() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let data = gen_inertia(50, &mut rng, false);
    let (mut exact, mut label) = (0.0f64, 0.0f64);
    let mut broken: f64 = 0.0;
    for row_idx in 0..data.len() {
        let row = &data.x.data()[row_idx * 20..(row_idx + 1) * 20];
        let y = Matrix3::from_row_slice(&data.y.data()[row_idx * 9..(row_idx + 1) * 9]);
        let i = inertia_oracle(row);
        label = label.max((y - i).norm() / i.norm());
        let r = random_orthogonal(&mut rng);
        let rotated = rotate_row(row, &r);
        let want = r * i * r.transpose();
        exact = exact.max((inertia_oracle(&rotated) - want).norm() / want.norm());
        let m = modified_oracle(row);
        let mw = r * m * r.transpose();
        broken = broken.max((modified_oracle(&rotated) - mw).norm() / mw.norm());
    }
    let recorded = modified_inertia_witness(&mut rng, 20);
    let windy = wind_witness(&HamiltonianSystem::windy(), &mut rng, 20);
    // Independent windy check through the energy of rotated states.
    let sys = HamiltonianSystem::windy();
    let mut wind: f64 = 0.0;
    for _ in 0..20 {
        let z = sample_initial_state(&sys, &mut rng);
        let (h, hr) = (sys.hamiltonian(&z), sys.hamiltonian(&z_rotation(&z, 1.0)));
        wind = wind.max((h - hr).abs() / h.abs().max(1.0));
    }
    check(
        exact < 1e-10 && label < 1e-12 && recorded.violation > 1e-3 && windy.violation > 1e-3 && broken > 1e-3 && wind > 1e-3,
        format!(
            "inertia equivariance {exact:.1e}, modified witness {:.3} (oracle {broken:.3}), wind witness {:.3} (oracle {wind:.3})",
            recorded.violation, windy.violation
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Integrator order

fn integrator_order() -> Outcome {
    let sys = HamiltonianSystem::default();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (t, dt) = (1.0, 0.02);
    let mut orders = Vec::new();
    for _ in 0..3 {
        let z0 = sample_initial_state(&sys, &mut rng);
        let end = |h: f64| -> Result<Vec<f64>, String> {
            let steps = (t / h).round() as usize;
            let mut traj = integrate_rk4(|z| sys.dynamics(z), &z0, h, steps).map_err(err)?;
            Ok(traj.pop().expect("nonempty"))
        };
        let reference = end(dt / 64.0)?;
        let dist = |v: Vec<f64>| v.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (e1, e2) = (dist(end(dt)?), dist(end(dt / 2.0)?));
        orders.push((e1 / e2).log2());
    }
    let order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let data = gen_pendulum(&sys, 200, 0, 3, CHUNK_DT, CHUNK_LEN).map_err(err)?;
    let mut drift: f64 = 0.0;
    for c in &data.train {
        let h0 = sys.h0(&c.states[0]);
        for s in &c.states {
            drift = drift.max((sys.h0(s) - h0).abs() / h0.abs());
        }
    }
    check(order >= 3.5 && drift < 1e-5, format!("min observed order {order:.2}, max relative H0 drift {drift:.1e}"))
}

// ---------------------------------------------------------------------------
// 8-12. Scaled-down reproductions

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Full-size inertia runs: 1000/1000 examples, width 128, 500 epochs.
fn inertia_base() -> ExperimentConfig {
    ExperimentConfig {
        eval_every: 500,
        equivariance_samples: 5,
        equivariance_rows: Some(100),
        ..ExperimentConfig::for_task(Task::Inertia, ModelKind::Rpp)
    }
}

/// Pendulum runs shrunk to 100/100 chunks, width 64 and 150 epochs.
fn pendulum_base() -> ExperimentConfig {
    ExperimentConfig {
        n_train: 100,
        n_test: 100,
        batch_size: Some(100),
        width: 64,
        epochs: 150,
        eval_every: 150,
        equivariance_samples: 5,
        equivariance_rows: Some(100),
        ..ExperimentConfig::for_task(Task::Pendulum, ModelKind::Rpp)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Medians {
    mlp: f64,
    emlp: f64,
    rpp: f64,
}

fn regime_medians(base: &ExperimentConfig, family: Family, regime: Regime) -> Result<Medians, String> {
    let rows: Vec<RegimeRow> = run_regimes(base, family, regime, &SEEDS, None).map_err(err)?;
    // Failed runs count as infinite error.
    let med = |kind: ModelKind| {
        median(
            rows.iter()
                .filter(|r| r.model == kind)
                .map(|r| if r.run.status == "completed" { r.run.test_mse } else { f64::INFINITY })
                .collect(),
        )
    };
    Ok(Medians {
        mlp: med(ModelKind::Mlp),
        emlp: med(ModelKind::Emlp),
        rpp: med(ModelKind::Rpp),
    })
}

fn show(label: &str, m: &Medians) -> String {
    format!("{label}: mlp {:.3e} emlp {:.3e} rpp {:.3e}", m.mlp, m.emlp, m.rpp)
}

fn exact_symmetry() -> Outcome {
    let m = regime_medians(&inertia_base(), Family::Inertia, Regime::Exact)?;
    let ok = m.rpp <= 1.3 * m.emlp && m.rpp <= 0.5 * m.mlp && m.emlp <= 0.5 * m.mlp;
    check(ok, format!("{} (rpp/emlp {:.2})", show("inertia", &m), m.rpp / m.emlp))
}

fn approximate_symmetry() -> Outcome {
    let a = regime_medians(&inertia_base(), Family::Inertia, Regime::Approximate)?;
    let b = regime_medians(&pendulum_base(), Family::Pendulum, Regime::Approximate)?;
    let ok = [&a, &b].iter().all(|m| m.rpp < m.mlp && m.rpp < m.emlp);
    check(ok, format!("{}; {}", show("modified inertia", &a), show("windy pendulum", &b)))
}

fn misspecified_symmetry() -> Outcome {
    let a = regime_medians(&inertia_base(), Family::Inertia, Regime::Misspecified)?;
    let b = regime_medians(&pendulum_base(), Family::Pendulum, Regime::Misspecified)?;
    let ok = [&a, &b].iter().all(|m| m.rpp <= 1.5 * m.mlp && m.emlp >= 3.0 * m.rpp);
    check(ok, format!("{}; {}", show("SL(3) inertia", &a), show("SO(3) pendulum", &b)))
}

fn posterior_shift() -> Outcome {
    let base = ExperimentConfig {
        seed: 0,
        equivariance_samples: 10,
        ..inertia_base()
    };
    let traces = ensemble(&base, &[Task::Inertia, Task::ModifiedInertia], 10, None).map_err(err)?;
    let final_median = |task: Task| {
        median(
            traces
                .iter()
                .filter(|t| t.task == task)
                .map(|t| t.equivariance_error.last().copied().unwrap_or(f64::NAN))
                .collect(),
        )
    };
    let (plain, modified) = (final_median(Task::Inertia), final_median(Task::ModifiedInertia));
    check(
        modified >= 3.0 * plain,
        format!("final median equivariance error: inertia {plain:.3e}, modified {modified:.3e} (ratio {:.1})", modified / plain),
    )
}

fn prior_robustness() -> Outcome {
    let base = ExperimentConfig {
        task: Task::ModifiedInertia,
        seed: 1,
        ..inertia_base()
    };
    let cells = prior_grid(&base, &DEFAULT_GRID, &DEFAULT_GRID, None).map_err(err)?;
    let mse = |c: &rpp_core::harness::GridCell| {
        if c.run.status == "completed" {
            c.run.test_mse
        } else {
            f64::INFINITY
        }
    };
    let best = cells.iter().min_by(|a, b| mse(a).total_cmp(&mse(b))).ok_or("empty grid")?;
    let min = mse(best);
    let top = DEFAULT_GRID[DEFAULT_GRID.len() - 1];
    let row: Vec<String> = cells
        .iter()
        .filter(|c| c.sigma_a2 == top)
        .map(|c| format!("{:.0e}:{:.3e}", c.sigma_b2, mse(c)))
        .collect();
    let worst = cells.iter().filter(|c| c.sigma_a2 == top).map(mse).fold(0.0, f64::max);
    check(
        worst <= 1.5 * min,
        format!(
            "grid min {min:.3e} at ({:.0e}, {:.0e}); sigma_a2={top:.0e} row [{}] (worst/min {:.2})",
            best.sigma_a2,
            best.sigma_b2,
            row.join(" "),
            worst / min
        ),
    )
}
