use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Task};
use super::data::{load_task, TaskData};
use super::train::{train_on, RunStatus, SolverCache, TrainOutcome};
use crate::error::{Error, Result};
use crate::layers::ModelKind;

/// Default prior variances of the ablation grid, on both axes.
pub const DEFAULT_GRID: [f64; 5] = [1e-2, 1.0, 1e2, 1e4, 1e6];

/// Symmetric data families with an exact, an approximate and a
/// misspecified variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Inertia,
    Pendulum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// The model group is the true symmetry of the data.
    Exact,
    /// The data only approximately respects the model group.
    Approximate,
    /// The model group is larger than the data's symmetry.
    Misspecified,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Exact, Regime::Approximate, Regime::Misspecified];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Exact => "exact",
            Regime::Approximate => "approximate",
            Regime::Misspecified => "misspecified",
        }
    }

    /// Task and model group of this regime within a family.
    pub fn setup(self, family: Family) -> (Task, &'static str) {
        match (family, self) {
            (Family::Inertia, Regime::Exact) => (Task::Inertia, "O(3)"),
            (Family::Inertia, Regime::Approximate) => (Task::ModifiedInertia, "O(3)"),
            (Family::Inertia, Regime::Misspecified) => (Task::Inertia, "SL(3)"),
            (Family::Pendulum, Regime::Exact) => (Task::Pendulum, "O(2)z"),
            (Family::Pendulum, Regime::Approximate) => (Task::WindyPendulum, "O(2)z"),
            (Family::Pendulum, Regime::Misspecified) => (Task::Pendulum, "SO(3)"),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "regime",
                name: s.to_string(),
            })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inertia" => Ok(Family::Inertia),
            "pendulum" => Ok(Family::Pendulum),
            _ => Err(Error::Unknown {
                kind: "family",
                name: s.to_string(),
            }),
        }
    }
}

/// Result of a run as it appears in summary tables. Failed runs keep a
/// row with an infinite MSE so that they count against their model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: String,
    pub test_mse: f64,
    pub equivariance_error: f64,
    pub epochs_run: usize,
}

impl RunSummary {
    fn from_result(result: Result<TrainOutcome>) -> Self {
        match result {
            Ok(o) => {
                let last = o.final_metrics();
                let epochs_run = last.map_or(0, |m| m.epoch + 1);
                match o.status {
                    RunStatus::Completed => Self {
                        status: "completed".into(),
                        test_mse: last.map_or(f64::INFINITY, |m| m.test_mse),
                        equivariance_error: last.map_or(f64::NAN, |m| m.equivariance_error),
                        epochs_run,
                    },
                    RunStatus::Diverged { epoch, .. } => Self {
                        status: "diverged".into(),
                        test_mse: f64::INFINITY,
                        equivariance_error: f64::NAN,
                        epochs_run: epoch,
                    },
                }
            }
            Err(e) => {
                log::warn!("run failed: {e}");
                Self {
                    status: format!("failed: {e}"),
                    test_mse: f64::INFINITY,
                    equivariance_error: f64::NAN,
                    epochs_run: 0,
                }
            }
        }
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: Regime,
    pub model: ModelKind,
    pub seed: u64,
    #[serde(flatten)]
    pub run: RunSummary,
}

/// Quartiles with linear interpolation between order statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            if lo == hi || v[lo] == v[hi] {
                v[lo]
            } else {
                v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
            }
        };
        Some(Self {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub model: ModelKind,
    pub runs: usize,
    pub failed: usize,
    #[serde(flatten)]
    pub mse: Quartiles,
}

/// Model kinds compared across regimes.
pub const REGIME_MODELS: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::Emlp, ModelKind::Rpp];

/// Trains MLP, EMLP and RPP on one regime of a family for every seed. The
/// three models of a seed share its data. `base` supplies everything but
/// task, model, group and seed.
pub fn run_regimes(
    base: &ExperimentConfig,
    family: Family,
    regime: Regime,
    seeds: &[u64],
    workers: Option<usize>,
) -> Result<Vec<RegimeRow>> {
    let (task, group) = regime.setup(family);
    let solvers = SolverCache::new();
    let jobs: Vec<(u64, ModelKind)> = seeds
        .iter()
        .flat_map(|&s| REGIME_MODELS.into_iter().map(move |m| (s, m)))
        .collect();
    with_workers(workers, || {
        let data: Vec<(u64, Result<TaskData>)> = seeds
            .par_iter()
            .map(|&seed| {
                let cfg = ExperimentConfig {
                    task,
                    seed,
                    ..base.clone()
                };
                (seed, load_task(&cfg))
            })
            .collect();
        jobs.par_iter()
            .map(|&(seed, model)| {
                let cfg = ExperimentConfig {
                    task,
                    model,
                    group: Some(group.to_string()),
                    seed,
                    ..base.clone()
                };
                let d = &data.iter().find(|(s, _)| *s == seed).expect("seed data").1;
                let result = match d {
                    Ok(d) => train_on(&cfg, d, &solvers),
                    Err(e) => Err(Error::Data(e.to_string())),
                };
                RegimeRow {
                    regime,
                    model,
                    seed,
                    run: RunSummary::from_result(result),
                }
            })
            .collect()
    })
}

/// Per-model quartiles of test MSE, in the order of `REGIME_MODELS`.
pub fn summarize_regimes(rows: &[RegimeRow]) -> Vec<RegimeSummary> {
    let mut out = Vec::new();
    for regime in Regime::ALL {
        for model in REGIME_MODELS {
            let sel: Vec<&RegimeRow> = rows.iter().filter(|r| r.regime == regime && r.model == model).collect();
            let mses: Vec<f64> = sel.iter().map(|r| r.run.test_mse).collect();
            if let Some(mse) = Quartiles::of(&mses) {
                out.push(RegimeSummary {
                    regime,
                    model,
                    runs: sel.len(),
                    failed: sel.iter().filter(|r| r.run.status != "completed").count(),
                    mse,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    #[serde(flatten)]
    pub run: RunSummary,
}

/// Trains one RPP per `(σ_a², σ_b²)` cell on the task of `base` (modified
/// inertia by default), all with the seed of `base`. Results come back in
/// the order of `cells`.
pub fn prior_grid_cells(
    base: &ExperimentConfig,
    cells: &[(f64, f64)],
    workers: Option<usize>,
) -> Result<Vec<GridCell>> {
    let data = load_task(base)?;
    let solvers = SolverCache::new();
    with_workers(workers, || {
        cells
            .par_iter()
            .map(|&(sigma_a2, sigma_b2)| {
                let cfg = ExperimentConfig {
                    model: ModelKind::Rpp,
                    sigma_a2,
                    sigma_b2,
                    ..base.clone()
                };
                GridCell {
                    sigma_a2,
                    sigma_b2,
                    run: RunSummary::from_result(train_on(&cfg, &data, &solvers)),
                }
            })
            .collect()
    })
}

/// The full grid `a_values × b_values`, row-major in `a_values`.
pub fn prior_grid(
    base: &ExperimentConfig,
    a_values: &[f64],
    b_values: &[f64],
    workers: Option<usize>,
) -> Result<Vec<GridCell>> {
    let cells: Vec<(f64, f64)> = a_values
        .iter()
        .flat_map(|&a| b_values.iter().map(move |&b| (a, b)))
        .collect();
    prior_grid_cells(base, &cells, workers)
}

/// Writes the MSE surface with one row per σ_a² and one column per σ_b².
pub fn write_grid_surface(path: &Path, cells: &[GridCell]) -> Result<()> {
    let mut a_vals: Vec<f64> = Vec::new();
    let mut b_vals: Vec<f64> = Vec::new();
    for c in cells {
        if !a_vals.contains(&c.sigma_a2) {
            a_vals.push(c.sigma_a2);
        }
        if !b_vals.contains(&c.sigma_b2) {
            b_vals.push(c.sigma_b2);
        }
    }
    a_vals.sort_by(f64::total_cmp);
    b_vals.sort_by(f64::total_cmp);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sigma_a2".to_string()];
    header.extend(b_vals.iter().map(|b| format!("sigma_b2={b}")));
    w.write_record(&header)?;
    for &a in &a_vals {
        let mut row = vec![a.to_string()];
        for &b in &b_vals {
            let v = cells
                .iter()
                .find(|c| c.sigma_a2 == a && c.sigma_b2 == b)
                .map_or(String::new(), |c| c.run.test_mse.to_string());
            row.push(v);
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-epoch equivariance errors of one ensemble member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTrace {
    pub task: Task,
    pub member: usize,
    pub seed: u64,
    pub status: String,
    pub epochs: Vec<usize>,
    pub equivariance_error: Vec<f64>,
}

/// Trains `k` RPP members on each of `tasks`. Members of a task share the
/// data (seeded by `base`) and differ in their initialization seed
/// `base.seed + 1 + member`.
pub fn ensemble(
    base: &ExperimentConfig,
    tasks: &[Task],
    k: usize,
    workers: Option<usize>,
) -> Result<Vec<EnsembleTrace>> {
    let solvers = SolverCache::new();
    let data: Vec<TaskData> = tasks
        .iter()
        .map(|&task| {
            load_task(&ExperimentConfig {
                task,
                data_seed: Some(base.data_seed()),
                ..base.clone()
            })
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..tasks.len()).flat_map(|t| (0..k).map(move |m| (t, m))).collect();
    with_workers(workers, || {
        jobs.par_iter()
            .map(|&(t, member)| {
                let seed = base.seed + 1 + member as u64;
                let cfg = ExperimentConfig {
                    task: tasks[t],
                    model: ModelKind::Rpp,
                    seed,
                    data_seed: Some(base.data_seed()),
                    ..base.clone()
                };
                let (status, epochs, errs) = match train_on(&cfg, &data[t], &solvers) {
                    Ok(o) => (
                        match o.status {
                            RunStatus::Completed => "completed".to_string(),
                            RunStatus::Diverged { .. } => "diverged".to_string(),
                        },
                        o.metrics.iter().map(|m| m.epoch).collect(),
                        o.metrics.iter().map(|m| m.equivariance_error).collect(),
                    ),
                    Err(e) => (format!("failed: {e}"), Vec::new(), Vec::new()),
                };
                EnsembleTrace {
                    task: tasks[t],
                    member,
                    seed,
                    status,
                    epochs,
                    equivariance_error: errs,
                }
            })
            .collect()
    })
}

/// Long-format traces: `task,member,seed,epoch,equivariance_error`.
pub fn write_traces(path: &Path, traces: &[EnsembleTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["task", "member", "seed", "epoch", "equivariance_error"])?;
    for t in traces {
        for (e, v) in t.epochs.iter().zip(&t.equivariance_error) {
            w.write_record([
                t.task.name().to_string(),
                t.member.to_string(),
                t.seed.to_string(),
                e.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes serializable rows as CSV with a header from their field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    // csv cannot serialize `#[serde(flatten)]` structs, so go through JSON objects.
    let mut w = csv::Writer::from_path(path)?;
    for (i, r) in rows.iter().enumerate() {
        let mut fields = Vec::new();
        flatten_json(String::new(), serde_json::to_value(r)?, &mut fields);
        if i == 0 {
            w.write_record(fields.iter().map(|(k, _)| k))?;
        }
        w.write_record(fields.iter().map(|(_, v)| v))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn flatten_json(prefix: String, v: serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten_json(key, v, out);
            }
        }
        serde_json::Value::String(s) => out.push((prefix, s)),
        serde_json::Value::Null => out.push((prefix, String::new())),
        other => out.push((prefix, other.to_string())),
    }
}
