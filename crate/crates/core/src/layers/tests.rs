use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::autodiff::{finite_diff_check, Tape, Tensor, Var};
use crate::basis::BasisSolver;
use crate::repr::{GroupSpec, Rep};

const INERTIA_IN: &str = "(R+V)^5";
const INERTIA_OUT: &str = "V*V";

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn inertia_spec(kind: ModelKind, width: usize, depth: usize) -> ModelSpec {
    ModelSpec::new(kind, "O(3)", INERTIA_IN, INERTIA_OUT)
        .with_width(width)
        .with_depth(depth)
}

fn randomize(model: &mut Model, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

#[test]
fn hidden_allocation_for_three_dimensional_base() {
    let l = HiddenLayout::allocate(128, 3);
    assert_eq!((l.k0, l.k1, l.k2), (50, 14, 4));
    assert_eq!(l.hidden_dim(), 128);
    assert_eq!(l.preact_dim(), 146);
    assert_eq!(l.hidden_rep().unwrap().dim(), 128);
    assert_eq!(l.preact_rep().unwrap().dim(), 146);
}

#[test]
fn rpp_with_free_paths_zeroed_equals_emlp() {
    let emlp = Model::build(&inertia_spec(ModelKind::Emlp, 60, 2), 1).unwrap();
    let mut emlp = emlp;
    randomize(&mut emlp, 2, 0.3);
    let mut rpp = Model::build(&inertia_spec(ModelKind::Rpp, 60, 2), 3).unwrap();
    for p in rpp.params_mut() {
        match emlp.param(&p.name) {
            Some(src) => p.value = src.value.clone(),
            None => p.value.data_mut().iter_mut().for_each(|v| *v = 0.0),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = randn(&mut rng, 7, 20);
    let (a, b) = (emlp.predict(&x).unwrap(), rpp.predict(&x).unwrap());
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-10);
    }
    let f = |t: &Tensor| rpp.predict(t);
    let err = mean_equivariance_error(f, &x, rpp.group(), rpp.rep_in(), rpp.rep_out(), 20, &mut rng).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn emlp_is_equivariant_and_rpp_is_not() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = randn(&mut rng, 10, 20);
    let mut emlp = Model::build(&inertia_spec(ModelKind::Emlp, 60, 3), 6).unwrap();
    randomize(&mut emlp, 7, 0.3);
    let f = |t: &Tensor| emlp.predict(t);
    let err = mean_equivariance_error(f, &x, emlp.group(), emlp.rep_in(), emlp.rep_out(), 20, &mut rng).unwrap();
    assert!(err < 1e-7, "{err}");

    let rpp = Model::build(&inertia_spec(ModelKind::Rpp, 60, 3), 6).unwrap();
    let f = |t: &Tensor| rpp.predict(t);
    let err = mean_equivariance_error(f, &x, rpp.group(), rpp.rep_in(), rpp.rep_out(), 5, &mut rng).unwrap();
    assert!(err > 1e-3, "{err}");
}

#[test]
fn single_identity_layer_mlp_is_identity() {
    let spec = ModelSpec::new(ModelKind::Mlp, "SO(3)", "V", "V").with_depth(0);
    let mut model = Model::build(&spec, 0).unwrap();
    let w = model.param_mut("l0.b_w").unwrap();
    w.value = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.25, -4.0]).unwrap();
    assert_eq!(model.predict(&x).unwrap(), x);
}

#[test]
fn prior_penalty_values() {
    let spec = ModelSpec::new(ModelKind::Emlp, "SO(3)", "V", "V").with_depth(0);
    let mut model = Model::build(&spec, 0).unwrap();
    model.params_mut().iter_mut().for_each(|p| p.value.data_mut().fill(0.0));
    assert_eq!(model.prior_penalty().unwrap(), 0.0);
    model.param_mut("l0.beta").unwrap().value.data_mut()[0] = 1.0;
    assert!((model.prior_penalty().unwrap() - 5e-6).abs() < 1e-18);

    let rpp = Model::build(&ModelSpec::new(ModelKind::Rpp, "SO(3)", "V", "V").with_depth(0), 1).unwrap();
    let only_b = |m: &Model| {
        let mut m = m.clone();
        for p in m.params_mut() {
            if p.class == PriorClass::Equivariant {
                p.value.data_mut().fill(0.0);
            }
        }
        m.prior_penalty().unwrap()
    };
    let spec2 = rpp.spec().clone().with_priors(1e5, 2.0);
    let mut doubled = Model::build(&spec2, rpp.seed()).unwrap();
    for (d, p) in doubled.params_mut().iter_mut().zip(rpp.params()) {
        d.value = p.value.clone();
    }
    assert_eq!(only_b(&doubled) * 2.0, only_b(&rpp));
}

#[test]
fn nonpositive_variance_is_a_config_error() {
    let spec = ModelSpec::new(ModelKind::Rpp, "SO(3)", "V", "V").with_priors(0.0, 1.0);
    assert!(matches!(Model::build(&spec, 0), Err(crate::Error::Config(_))));
}

#[test]
fn mlp_uses_sigma_b_and_emlp_uses_sigma_a_for_everything() {
    let spec = |k| ModelSpec::new(k, "SO(3)", "V", "V").with_depth(1).with_width(12).with_priors(4.0, 0.5);
    for (kind, var) in [(ModelKind::Mlp, 0.5), (ModelKind::Emlp, 4.0)] {
        let m = Model::build(&spec(kind), 3).unwrap();
        let want: f64 = m.params().iter().map(|p| p.value.norm_sq() / (2.0 * var)).sum();
        assert!((m.prior_penalty().unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn prior_covariance_matches_monte_carlo() {
    let solver = BasisSolver::new(GroupSpec::so2());
    let basis = solver.solve(&Rep::base(2), &Rep::base(2)).unwrap();
    let q = basis.dense_q();
    let proj = &q * q.transpose();
    let eye = DMatrix::<f64>::identity(4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (sa, sb) in [(3.0, 0.5), (0.0, 1.0)] {
        let n = 20_000;
        let mut mean = DVector::<f64>::zeros(4);
        let mut second = DMatrix::<f64>::zeros(4, 4);
        for _ in 0..n {
            let w = sample_prior_weight(&basis, sa, sb, &mut rng).unwrap();
            let v = DVector::from_column_slice(w.as_slice());
            mean += &v;
            second += &v * v.transpose();
        }
        mean /= n as f64;
        let cov = second / n as f64 - &mean * mean.transpose();
        let want = &proj * (sa + sb) + (&eye - &proj) * sb;
        let rel = (&cov - &want).norm() / want.norm();
        assert!(rel < 0.05, "sigma_a2={sa}: {rel}");
        for i in 0..4 {
            let se = (want[(i, i)] / n as f64).sqrt();
            assert!(mean[i].abs() < 3.0 * se + 1e-12, "mean {i}: {}", mean[i]);
        }
    }
}

#[test]
fn min_norm_split_solves_the_regularized_least_squares() {
    let solver = BasisSolver::new(GroupSpec::o2());
    let basis = solver.solve(&Rep::base(2), &Rep::base(2).power(2).unwrap()).unwrap();
    let q = basis.dense_q();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = DMatrix::from_fn(4, 2, |_, _| rng.sample(StandardNormal));
    let (sa, sb) = (2.0, 0.3);
    // Minimize |b|^2/2sa + |w - Q b|^2/2sb: (I/sa + Q^T Q/sb) b = Q^T w / sb.
    let vw = DVector::from_column_slice(w.as_slice());
    let lhs = DMatrix::identity(q.ncols(), q.ncols()) / sa + q.transpose() * &q / sb;
    let rhs = q.transpose() * &vw / sb;
    let want = lhs.lu().solve(&rhs).unwrap();
    let (beta, b) = min_norm_split(&basis, &w, sa, sb).unwrap();
    assert!((beta - &want).norm() < 1e-12);
    assert!((basis.expand(&want) + b - w).norm() < 1e-12);
}

fn split_penalty(basis: &crate::basis::EquivariantBasis, w: &DMatrix<f64>, sa: f64, sb: f64) -> f64 {
    let (beta, b) = min_norm_split(basis, w, sa, sb).unwrap();
    beta.norm_squared() / (2.0 * sa) + b.norm_squared() / (2.0 * sb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equivariant_weights_are_cheaper_under_the_prior(
        log_sa in -3.0f64..6.0,
        log_sb in -3.0f64..6.0,
        seed in 0u64..1000,
    ) {
        let (sa, sb) = (10f64.powf(log_sa), 10f64.powf(log_sb));
        let solver = BasisSolver::new(GroupSpec::so3());
        let basis = solver.solve(&Rep::base(3), &Rep::base(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let we = basis.random_element(&mut rng);
        let mut wn = DMatrix::from_fn(3, 3, |_, _| rng.sample(StandardNormal));
        prop_assume!(basis.complement(&wn).unwrap().norm() > 1e-3);
        wn *= we.norm() / wn.norm();
        prop_assert!(split_penalty(&basis, &we, sa, sb) < split_penalty(&basis, &wn, sa, sb));
    }

    #[test]
    fn rel_err_is_in_unit_interval(
        a in prop::collection::vec(-5.0f64..5.0, 4),
        b in prop::collection::vec(-5.0f64..5.0, 4),
    ) {
        let e = rel_err(&a, &b);
        prop_assert!((0.0..=1.0).contains(&e));
    }
}

#[test]
fn rel_err_extremes() {
    let a = [1.0, -2.0, 0.5];
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    assert_eq!(rel_err(&a, &a), 0.0);
    assert!((rel_err(&a, &neg) - 1.0).abs() < 1e-15);
    assert_eq!(rel_err(&[0.0; 3], &[0.0; 3]), 0.0);
}

#[test]
fn parameter_count_follows_solved_ranks() {
    let spec = inertia_spec(ModelKind::Rpp, 128, 3);
    let solver = BasisSolver::new(GroupSpec::o3());
    let a = Model::build_with(&spec, &solver, 1).unwrap();
    let b = Model::build_with(&spec, &solver, 2).unwrap();
    let layout = spec.hidden_layout().unwrap();
    let linear: usize = a
        .layer_shapes()
        .iter()
        .zip(a.basis_ranks())
        .map(|(&(o, i), (r, rb))| r + o * i + rb + o)
        .sum();
    let nonlin_per_block = 1
        + (layout.k0 + layout.gates()) * layout.gates()
        + 2 * layout.k1 * layout.k2;
    assert_eq!(a.param_count(), linear + 3 * nonlin_per_block);
    assert_eq!(a.param_count(), b.param_count());
    assert_eq!(a.basis_ranks(), b.basis_ranks());
}

#[test]
fn same_seed_gives_identical_parameters() {
    let spec = inertia_spec(ModelKind::Rpp, 30, 2);
    let (a, b) = (Model::build(&spec, 9).unwrap(), Model::build(&spec, 9).unwrap());
    assert_eq!(a.params(), b.params());
    let c = Model::build(&spec, 10).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn mlp_and_rpp_free_paths_line_up() {
    // RPP hidden layers carry gate scalars, so only the outer dimensions
    // coincide with the MLP; every RPP free weight matches its layer shape.
    let mlp = Model::build(&inertia_spec(ModelKind::Mlp, 30, 2), 0).unwrap();
    let rpp = Model::build(&inertia_spec(ModelKind::Rpp, 30, 2), 0).unwrap();
    let free = |m: &Model| -> Vec<Vec<usize>> {
        m.params()
            .iter()
            .filter(|p| p.name.ends_with(".b_w"))
            .map(|p| p.value.shape().to_vec())
            .collect()
    };
    let (fm, fr) = (free(&mlp), free(&rpp));
    assert_eq!(fm.len(), fr.len());
    assert_eq!(fm[0][1], fr[0][1]);
    assert_eq!(fm.last().unwrap()[0], fr.last().unwrap()[0]);
    for (shape, (o, i)) in fr.iter().zip(rpp.layer_shapes()) {
        assert_eq!(shape, &vec![o, i]);
    }
}

#[test]
fn rpp_over_trivial_group_has_full_equivariant_path() {
    let spec = ModelSpec::new(ModelKind::Rpp, "trivial3", "V^2", "V").with_width(15).with_depth(2);
    let m = Model::build(&spec, 0).unwrap();
    for ((o, i), (r, rb)) in m.layer_shapes().into_iter().zip(m.basis_ranks()) {
        assert_eq!(r, o * i);
        assert_eq!(rb, o);
    }
}

fn conv_spec(c_in: usize, hidden: usize, depth: usize) -> ModelSpec {
    ModelSpec::conv(ConvSpec {
        height: 4,
        width: 5,
        channels: c_in,
        hidden_channels: hidden,
        outputs: 3,
    })
    .with_depth(depth)
}

fn correlate(img: &[f64], h: usize, w: usize, filt: &[f64]) -> Vec<f64> {
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

#[test]
fn rpp_conv_equivariant_path_is_a_convolution() {
    let mut model = Model::build(&conv_spec(2, 3, 1), 4).unwrap();
    assert_eq!(model.basis_ranks()[0].0, 2 * 3 * 9);
    model.param_mut("l0.b_w").unwrap().value.data_mut().fill(0.0);
    let w = model.effective_weight(0).unwrap();
    let beta = model.param("l0.beta").unwrap().value.data().to_vec();
    let (h, wd) = (4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..3 {
        let img: Vec<f64> = if trial == 0 {
            let mut v = vec![0.0; 2 * h * wd];
            v[h * wd + 7] = 1.0;
            v
        } else {
            (0..2 * h * wd).map(|_| rng.sample(StandardNormal)).collect()
        };
        let out = &w * DVector::from_column_slice(&img);
        for co in 0..3 {
            let mut want = vec![0.0; h * wd];
            for ci in 0..2 {
                // Block (co, ci) coordinates, scaled back to filter taps.
                let block = &beta[(co * 2 + ci) * 9..(co * 2 + ci + 1) * 9];
                let filt: Vec<f64> = TAP_COUNTS.iter().zip(block).map(|(c, b)| b / (*c as f64).sqrt()).collect();
                for (acc, v) in want.iter_mut().zip(correlate(&img[ci * h * wd..(ci + 1) * h * wd], h, wd, &filt)) {
                    *acc += v;
                }
            }
            for p in 0..h * wd {
                assert!((out[co * h * wd + p] - want[p]).abs() < 1e-12);
            }
        }
    }
}

/// Valid (output, input) pixel pairs per tap on a 4x5 image.
const TAP_COUNTS: [usize; 9] = [12, 15, 12, 16, 20, 16, 12, 15, 12];

#[test]
fn rpp_conv_rejects_tiny_images() {
    let spec = ModelSpec::conv(ConvSpec {
        height: 2,
        width: 5,
        channels: 1,
        hidden_channels: 1,
        outputs: 1,
    });
    assert!(Model::build(&spec, 0).is_err());
}

fn mse_plus_prior<'a>(model: &'a Model, x: &Tensor, y: &Tensor) -> impl Fn(&mut Tape, &[Var]) -> crate::Result<Var> + 'a {
    let (x, y) = (x.clone(), y.clone());
    move |t: &mut Tape, v: &[Var]| {
        let xv = t.leaf(x.clone());
        let yv = t.leaf(y.clone());
        let out = model.forward(t, v, xv)?;
        let r = t.sub(out, yv)?;
        let sq = t.square(r);
        let mse = t.mean(sq);
        let prior = model.prior_penalty_var(t, v)?;
        let prior = t.scale(prior, 1e-2);
        t.add(mse, prior)
    }
}

#[test]
fn every_model_kind_passes_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let specs = [
        inertia_spec(ModelKind::Mlp, 20, 2),
        inertia_spec(ModelKind::Emlp, 60, 2),
        inertia_spec(ModelKind::Rpp, 60, 2),
        conv_spec(1, 2, 2),
    ];
    for spec in specs {
        let mut model = Model::build(&spec, 3).unwrap();
        randomize(&mut model, 4, 0.3);
        let x = randn(&mut rng, 4, model.n_in());
        let y = randn(&mut rng, 4, model.n_out());
        let params: Vec<Tensor> = model.params().iter().map(|p| p.value.clone()).collect();
        let check = finite_diff_check(&params, 5, mse_plus_prior(&model, &x, &y)).unwrap();
        assert!(check.max_rel_error < 1e-4, "{:?}: {check:?}", spec.kind);
    }
}

#[test]
fn prior_penalty_gradient_matches_finite_differences() {
    let model = Model::build(&inertia_spec(ModelKind::Rpp, 30, 1), 2).unwrap();
    let params: Vec<Tensor> = model.params().iter().map(|p| p.value.clone()).collect();
    let check = finite_diff_check(&params, 0, |t, v| model.prior_penalty_var(t, v)).unwrap();
    assert!(check.max_rel_error < 1e-6, "{check:?}");
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let p = model.prior_penalty_var(&mut tape, &vars).unwrap();
    assert!((tape.value(p).item() - model.prior_penalty().unwrap()).abs() < 1e-9);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = Model::build(&inertia_spec(ModelKind::Rpp, 30, 1), 5).unwrap();
    randomize(&mut model, 6, 1.0);
    let ckpt = model.checkpoint();
    ckpt.write(dir.path()).unwrap();
    let (back, rebuilt) = Checkpoint::read(dir.path()).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(rebuilt.params(), model.params());
}

#[test]
fn rpp_starts_from_the_emlp_of_equal_seed() {
    let emlp = Model::build(&inertia_spec(ModelKind::Emlp, 60, 2), 11).unwrap();
    let rpp = Model::build(&inertia_spec(ModelKind::Rpp, 60, 2), 11).unwrap();
    let (sa, _) = rpp.spec().init_split();
    for p in emlp.params() {
        let q = rpp.param(&p.name).unwrap();
        let scale = if p.name.ends_with(".beta") { sa } else { 1.0 };
        for (a, b) in p.value.data().iter().zip(q.value.data()) {
            assert!((a * scale - b).abs() < 1e-15, "{}", p.name);
        }
    }
}

#[test]
fn init_split_follows_prior_variances() {
    let spec = inertia_spec(ModelKind::Rpp, 60, 1).with_priors(3.0, 1.0);
    let (a, b) = spec.init_split();
    assert!((a * a - 0.75).abs() < 1e-15 && (b * b - 0.25).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let wide = Model::build(&spec.clone().with_priors(1e6, 1e-6), 2).unwrap();
    let x = randn(&mut rng, 5, 20);
    let f = |t: &Tensor| wide.predict(t);
    let err = mean_equivariance_error(f, &x, wide.group(), wide.rep_in(), wide.rep_out(), 5, &mut rng).unwrap();
    assert!(err < 1e-4, "{err}");
}
