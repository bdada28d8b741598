use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{load_task, select_rows, select_steps, TaskData};
use super::optim::{adam_step, cosine_lr, AdamState};
use crate::autodiff::{Tape, Tensor, Var};
use crate::basis::BasisSolver;
use crate::dynamics::hnn_rollout_loss_var;
use crate::error::{Error, Result};
use crate::layers::{mean_equivariance_error, ConvSpec, Model, ModelKind, ModelSpec};
use crate::repr::GroupSpec;

/// Objective above which a run is abandoned as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

/// One row of `metrics.csv`. Wall-clock time is kept separately so that
/// metrics files are reproducible bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Data loss averaged over the epoch's optimizer steps.
    pub train_loss: f64,
    /// Weighted prior term averaged over the same steps.
    pub prior_penalty: f64,
    /// The optimized scalar, `train_loss + prior_penalty`.
    pub objective: f64,
    pub test_mse: f64,
    pub equivariance_error: f64,
    #[serde(skip)]
    pub wall_clock: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub metrics: Vec<MetricsRecord>,
    pub model: Model,
    pub status: RunStatus,
}

impl TrainOutcome {
    pub fn final_metrics(&self) -> Option<&MetricsRecord> {
        self.metrics.last()
    }
}

/// Basis solvers shared between runs, one per group.
#[derive(Default)]
pub struct SolverCache {
    solvers: Mutex<HashMap<String, Arc<BasisSolver>>>,
}

impl SolverCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, group: &str) -> Result<Arc<BasisSolver>> {
        let spec = GroupSpec::by_name(group)?;
        let mut map = self.solvers.lock().expect("solver cache lock");
        Ok(map
            .entry(spec.name().to_string())
            .or_insert_with(|| Arc::new(BasisSolver::new(spec)))
            .clone())
    }
}

/// Model spec implied by a config and its data.
pub fn model_spec(config: &ExperimentConfig, data: &TaskData) -> Result<ModelSpec> {
    let spec = match (config.task.reps(), data) {
        (Some((rep_in, rep_out)), _) => ModelSpec::new(config.model, &config.group_name(), rep_in, rep_out),
        (None, TaskData::Regression { train, image_side, .. }) => {
            let (n_in, n_out) = (train.x.shape()[1], train.y.shape()[1]);
            if config.model == ModelKind::RppConv {
                let side = image_side.ok_or_else(|| Error::Config("rpp-conv needs image inputs".into()))?;
                ModelSpec::conv(ConvSpec {
                    height: side,
                    width: side,
                    channels: 1,
                    hidden_channels: config.channels,
                    outputs: n_out,
                })
            } else {
                ModelSpec::new(config.model, "trivial1", &format!("R^{n_in}"), &format!("R^{n_out}"))
            }
        }
        (None, TaskData::Trajectories { .. }) => {
            return Err(Error::Config("trajectory data needs a task with representations".into()))
        }
    };
    Ok(spec
        .with_depth(config.depth)
        .with_width(config.width)
        .with_priors(config.sigma_a2, config.sigma_b2))
}

/// Seed of model initialization, kept apart from the data seed.
fn init_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f_1417
}

fn regression_loss(tape: &mut Tape, model: &Model, vars: &[Var], x: &Tensor, y: &Tensor) -> Result<Var> {
    let xv = tape.leaf(x.clone());
    let yv = tape.leaf(y.clone());
    let pred = model.forward(tape, vars, xv)?;
    let r = tape.sub(pred, yv)?;
    let sq = tape.square(r);
    Ok(tape.mean(sq))
}

/// Test-set MSE (rollout MSE for trajectory tasks).
pub fn test_mse(model: &Model, data: &TaskData) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = model.params().iter().map(|p| tape.leaf(p.value.clone())).collect();
    let loss = match data {
        TaskData::Regression { test, .. } => regression_loss(&mut tape, model, &vars, &test.x, &test.y)?,
        TaskData::Trajectories {
            test, dt, input_scale, ..
        } => hnn_rollout_loss_var(&mut tape, model, &vars, test, *dt, input_scale)?,
    };
    Ok(tape.value(loss).item())
}

/// Mean equivariance error of the model over its own group on test inputs
/// (scaled first states for trajectory tasks); 0 for convolutional models.
pub fn model_equivariance_error(
    model: &Model,
    data: &TaskData,
    samples: usize,
    rows: Option<usize>,
    seed: u64,
) -> Result<f64> {
    if model.spec().kind == ModelKind::RppConv {
        return Ok(0.0);
    }
    let scaled;
    let xs = match data {
        TaskData::Regression { test, .. } => &test.x,
        TaskData::Trajectories { test, input_scale, .. } => {
            let d = input_scale.len();
            let data = test[0].data().iter().enumerate().map(|(i, v)| v * input_scale[i % d]).collect();
            scaled = Tensor::new(test[0].shape().to_vec(), data)?;
            &scaled
        }
    };
    let n = xs.shape()[0];
    let xs = match rows {
        Some(r) if r < n => select_rows(xs, &(0..r).collect::<Vec<_>>()),
        _ => xs.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mean_equivariance_error(
        |x: &Tensor| model.predict(x),
        &xs,
        model.group(),
        model.rep_in(),
        model.rep_out(),
        samples,
        &mut rng,
    )
}

/// Generates the task data and trains.
pub fn train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let data = load_task(config)?;
    train_on(config, &data, &SolverCache::new())
}

/// Trains a fresh model on `data` with Adam on `data loss + w * prior`,
/// where `w` is `config.prior_weight` (default 1).
pub fn train_on(config: &ExperimentConfig, data: &TaskData, solvers: &SolverCache) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = model_spec(config, data)?;
    let mut model = if spec.kind == ModelKind::RppConv {
        Model::build_rpp_conv(&spec, init_seed(config.seed))?
    } else {
        Model::build_with(&spec, solvers.get(&spec.group)?.as_ref(), init_seed(config.seed))?
    };
    let n = data.n_train();
    let weight = config.prior_weight.unwrap_or(1.0);
    let batch = config.batch_size.unwrap_or(n).min(n).max(1);
    let mut adam = AdamState::new(model.params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5_4af_f1e);
    let mut order: Vec<usize> = (0..n).collect();
    let start = Instant::now();
    let mut metrics = Vec::new();
    let mut status = RunStatus::Completed;

    'epochs: for epoch in 0..config.epochs {
        let lr = if config.cosine {
            cosine_lr(config.lr, epoch, config.epochs)
        } else {
            config.lr
        };
        if batch < n {
            order.shuffle(&mut shuffle_rng);
        }
        let (mut sum_loss, mut sum_prior, mut sum_obj, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for idx in order.chunks(batch) {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let loss = match data {
                TaskData::Regression { train, .. } => {
                    if idx.len() == n {
                        regression_loss(&mut tape, &model, &vars, &train.x, &train.y)?
                    } else {
                        let (x, y) = (select_rows(&train.x, idx), select_rows(&train.y, idx));
                        regression_loss(&mut tape, &model, &vars, &x, &y)?
                    }
                }
                TaskData::Trajectories {
                    train, dt, input_scale, ..
                } => {
                    let steps_b = if idx.len() == n { train.clone() } else { select_steps(train, idx) };
                    hnn_rollout_loss_var(&mut tape, &model, &vars, &steps_b, *dt, input_scale)?
                }
            };
            let prior = model.prior_penalty_var(&mut tape, &vars)?;
            let prior = tape.scale(prior, weight);
            let objective = tape.add(loss, prior)?;
            let (l, p, o) = (
                tape.value(loss).item(),
                tape.value(prior).item(),
                tape.value(objective).item(),
            );
            if !o.is_finite() || o > DIVERGENCE_THRESHOLD {
                log::warn!("run diverged at epoch {epoch} with objective {o}");
                status = RunStatus::Diverged { epoch, loss: o };
                break 'epochs;
            }
            let grads = tape.backward(objective)?;
            adam_step(model.params_mut(), &grads.values, &mut adam, lr)?;
            sum_loss += l;
            sum_prior += p;
            sum_obj += o;
            steps += 1;
        }
        let last = epoch + 1 == config.epochs;
        if epoch % config.eval_every == 0 || last {
            let k = steps as f64;
            let eq_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64);
            metrics.push(MetricsRecord {
                epoch,
                train_loss: sum_loss / k,
                prior_penalty: sum_prior / k,
                objective: sum_obj / k,
                test_mse: test_mse(&model, data)?,
                equivariance_error: model_equivariance_error(
                    &model,
                    data,
                    config.equivariance_samples,
                    config.equivariance_rows,
                    eq_seed,
                )?,
                wall_clock: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(TrainOutcome {
        config: config.clone(),
        spec,
        metrics,
        model,
        status,
    })
}
