//! `rpp`: data generation, training and experiment drivers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rpp_core::basis::{BasisSolver, SVD_TOLERANCE};
use rpp_core::dynamics::{write_dataset, DatasetMeta};
use rpp_core::harness::{
    ensemble, generate_dataset, ingest_csv_regression, prior_grid, run_regimes, summarize_regimes,
    train_and_persist, write_grid_surface, write_numeric_csv, write_rows, write_traces, CsvSource,
    ExperimentConfig, Family, Regime, RunStatus, Task, DEFAULT_GRID,
};
use rpp_core::layers::ModelKind;
use rpp_core::repr::{catalog, parse_rep, GroupSpec};

#[derive(Parser)]
#[command(name = "rpp", version, about = "Residual pathway prior experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV per split plus metadata.json).
    GenData(GenDataArgs),
    /// Train one model and persist the run directory.
    Train(TrainArgs),
    /// Compare MLP, EMLP and RPP over seeds in the three symmetry regimes.
    Experiment(ExperimentArgs),
    /// Train RPP over a grid of prior variances.
    Ablate(AblateArgs),
    /// Train RPP ensembles on inertia and modified inertia and log traces.
    Ensemble(EnsembleArgs),
    /// Solve an equivariant basis and dump it.
    Basis(BasisArgs),
    /// Print the Mujoco representation catalog.
    Catalog(CatalogArgs),
    /// Standardize, split and optionally image-pad a numeric CSV.
    Ingest(IngestArgs),
}

/// Flags shared by the training commands. Each overrides the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// JSON file with an experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    sigma_a2: Option<f64>,
    #[arg(long)]
    sigma_b2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Weight of the prior penalty in the objective.
    #[arg(long)]
    prior_weight: Option<f64>,
    /// Cosine learning-rate decay.
    #[arg(long)]
    cosine: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel runs; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self, default_task: Task, default_model: ModelKind) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentConfig::from_json(&text)?
            }
            None => {
                let task = self.task.unwrap_or(default_task);
                ExperimentConfig::for_task(task, self.model.unwrap_or(default_model))
            }
        };
        if let Some(t) = self.task {
            if t != c.task && self.config.is_some() {
                let defaults = ExperimentConfig::for_task(t, c.model);
                c.epochs = defaults.epochs;
                c.batch_size = defaults.batch_size;
            }
            c.task = t;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        take!(model, sigma_a2, sigma_b2, epochs, lr, seed, n_train, n_test, width, depth, eval_every);
        if self.group.is_some() {
            c.group = self.group.clone();
        }
        if self.prior_weight.is_some() {
            c.prior_weight = self.prior_weight;
        }
        if self.batch_size.is_some() {
            c.batch_size = self.batch_size;
        }
        if self.cosine {
            c.cosine = true;
        }
        if self.out.is_some() {
            c.out = self.out.clone();
        }
        c.validate()?;
        Ok(c)
    }

    fn out_dir(&self, fallback: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value = "inertia")]
    task: Task,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// `inertia` or `pendulum`.
    #[arg(long, default_value = "inertia")]
    family: Family,
    /// One regime; all three when omitted.
    #[arg(long)]
    regime: Option<Regime>,
    /// Number of seeds, starting at `--seed` (0 by default).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma separated σ_a² values.
    #[arg(long, value_delimiter = ',')]
    a_grid: Vec<f64>,
    /// Comma separated σ_b² values.
    #[arg(long, value_delimiter = ',')]
    b_grid: Vec<f64>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10)]
    members: usize,
}

#[derive(Args)]
struct BasisArgs {
    #[arg(long)]
    group: String,
    #[arg(long)]
    rep_in: String,
    #[arg(long)]
    rep_out: String,
    /// CSV path for Q; the header goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CatalogArgs {
    /// Only this environment.
    #[arg(long)]
    env: Option<String>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    target: String,
    /// Zero-pad features to the smallest square image.
    #[arg(long)]
    image: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Experiment(a) => experiment(a),
        Command::Ablate(a) => ablate(a),
        Command::Ensemble(a) => run_ensemble(a),
        Command::Basis(a) => basis(a),
        Command::Catalog(a) => print_catalog(a),
        Command::Ingest(a) => ingest(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let defaults = ExperimentConfig::for_task(a.task, ModelKind::Rpp);
    let (n_train, n_test) = (a.n_train.unwrap_or(defaults.n_train), a.n_test.unwrap_or(defaults.n_test));
    let ds = generate_dataset(a.task, n_train, n_test, a.seed)?;
    write_dataset(&a.out, &ds, &DatasetMeta::new(a.task.name(), a.seed, &ds))?;
    println!("wrote {} ({n_train} train, {n_test} test)", a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = a.common.config(Task::Inertia, ModelKind::Rpp)?;
    if config.out.is_none() {
        config.out = Some(PathBuf::from("runs"));
    }
    let (outcome, dir) = train_and_persist(&config)?;
    let dir = dir.expect("output directory set");
    let last = outcome.final_metrics();
    match (&outcome.status, last) {
        (RunStatus::Completed, Some(m)) => println!(
            "{} epoch {}: train {:.4e} test {:.4e} equivariance {:.3e} -> {}",
            config.model.name(),
            m.epoch,
            m.train_loss,
            m.test_mse,
            m.equivariance_error,
            dir.path.display()
        ),
        (RunStatus::Diverged { epoch, loss }, _) => {
            println!("diverged at epoch {epoch} (objective {loss:.3e}) -> {}", dir.path.display())
        }
        _ => println!("no metrics recorded -> {}", dir.path.display()),
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let task = match a.family {
        Family::Inertia => Task::Inertia,
        Family::Pendulum => Task::Pendulum,
    };
    let base = a.common.config(task, ModelKind::Rpp)?;
    let seeds: Vec<u64> = (base.seed..base.seed + a.seeds).collect();
    let regimes = a.regime.map_or(Regime::ALL.to_vec(), |r| vec![r]);
    let out = a.common.out_dir("experiment");
    fs::create_dir_all(&out)?;
    write_json(&out.join("config.json"), &base)?;
    let mut rows = Vec::new();
    for regime in regimes {
        log::info!("{regime} regime over {} seeds", seeds.len());
        rows.extend(run_regimes(&base, a.family, regime, &seeds, a.common.workers)?);
    }
    let summary = summarize_regimes(&rows);
    write_rows(&out.join("runs.csv"), &rows)?;
    write_rows(&out.join("summary.csv"), &summary)?;
    for s in &summary {
        println!(
            "{:<12} {:<5} median {:.4e} [q1 {:.4e}, q3 {:.4e}] failed {}",
            s.regime, s.model.name(), s.mse.median, s.mse.q1, s.mse.q3, s.failed
        );
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let base = a.common.config(Task::ModifiedInertia, ModelKind::Rpp)?;
    let grid = |v: &[f64]| if v.is_empty() { DEFAULT_GRID.to_vec() } else { v.to_vec() };
    let (av, bv) = (grid(&a.a_grid), grid(&a.b_grid));
    let out = a.common.out_dir("ablate");
    fs::create_dir_all(&out)?;
    write_json(&out.join("config.json"), &base)?;
    let cells = prior_grid(&base, &av, &bv, a.common.workers)?;
    write_rows(&out.join("grid.csv"), &cells)?;
    write_grid_surface(&out.join("surface.csv"), &cells)?;
    println!("{} cells -> {}", cells.len(), out.display());
    Ok(())
}

fn run_ensemble(a: EnsembleArgs) -> Result<()> {
    let base = a.common.config(Task::Inertia, ModelKind::Rpp)?;
    let out = a.common.out_dir("ensemble");
    fs::create_dir_all(&out)?;
    write_json(&out.join("config.json"), &base)?;
    let traces = ensemble(&base, &[Task::Inertia, Task::ModifiedInertia], a.members, a.common.workers)?;
    write_traces(&out.join("traces.csv"), &traces)?;
    for task in [Task::Inertia, Task::ModifiedInertia] {
        let mut finals: Vec<f64> = traces
            .iter()
            .filter(|t| t.task == task)
            .filter_map(|t| t.equivariance_error.last().copied())
            .collect();
        finals.sort_by(f64::total_cmp);
        if let Some(m) = finals.get(finals.len() / 2) {
            println!("{:<17} final equivariance error (median of {}): {m:.4e}", task.name(), finals.len());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BasisHeader {
    group: String,
    rep_in: String,
    rep_out: String,
    n_out: usize,
    n_in: usize,
    r: usize,
    tolerance: f64,
    max_constraint_violation: f64,
}

fn basis(a: BasisArgs) -> Result<()> {
    let group = GroupSpec::by_name(&a.group)?;
    let rep_in = parse_rep(&a.rep_in, group.base_dim())?;
    let rep_out = parse_rep(&a.rep_out, group.base_dim())?;
    let solver = BasisSolver::new(group.clone());
    let basis = solver.solve(&rep_in, &rep_out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let violation = basis.max_constraint_violation(&group, &rep_in, &rep_out, 10, &mut rng)?;
    let q = basis.dense_q();
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&a.out)?;
    for i in 0..q.nrows() {
        w.write_record(q.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    let header = BasisHeader {
        group: group.name().to_string(),
        rep_in: rep_in.to_string(),
        rep_out: rep_out.to_string(),
        n_out: rep_out.dim(),
        n_in: rep_in.dim(),
        r: basis.rank(),
        tolerance: SVD_TOLERANCE,
        max_constraint_violation: violation,
    };
    write_json(&a.out.with_extension("json"), &header)?;
    println!(
        "{} {} -> {}: rank {} of {}, violation {:.2e}",
        header.group,
        header.rep_in,
        header.rep_out,
        header.r,
        header.n_out * header.n_in,
        violation
    );
    Ok(())
}

#[derive(Serialize)]
struct CatalogRow {
    env: String,
    group: String,
    state: String,
    action: String,
    state_dim: usize,
    action_dim: usize,
    raw_observed_entries: Option<usize>,
    consistent_with_raw_table: Option<bool>,
}

fn print_catalog(a: CatalogArgs) -> Result<()> {
    let report = catalog::verification_report();
    let mut rows = Vec::new();
    for env in catalog::ENVIRONMENTS {
        if a.env.as_deref().is_some_and(|e| !e.eq_ignore_ascii_case(env)) {
            continue;
        }
        let e = catalog::catalog_entry(env)?;
        let check = report.iter().find(|c| c.env == env);
        rows.push(CatalogRow {
            env: env.to_string(),
            group: e.group.name().to_string(),
            state: e.state_text.to_string(),
            action: e.action_text.to_string(),
            state_dim: e.state_rep.dim(),
            action_dim: e.action_rep.dim(),
            raw_observed_entries: check.and_then(|c| c.observed_entries),
            consistent_with_raw_table: check.and_then(|c| c.consistent),
        });
    }
    if rows.is_empty() {
        bail!("unknown environment {:?}", a.env.unwrap_or_default());
    }
    let json = serde_json::to_string_pretty(&rows)?;
    match a.out {
        Some(p) => fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let d = ingest_csv_regression(&a.csv, &a.target, a.image, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let width = d.train.x.shape()[1];
    let mut header: Vec<String> = d.features.clone();
    header.extend((d.features.len()..width).map(|i| format!("pad{i}")));
    header.push(a.target.clone());
    for (name, split) in [("train.csv", &d.train), ("test.csv", &d.test)] {
        let rows: Vec<Vec<f64>> = (0..split.len())
            .map(|i| {
                let mut r = split.x.data()[i * width..(i + 1) * width].to_vec();
                r.push(split.y.data()[i]);
                r
            })
            .collect();
        write_numeric_csv(&a.out.join(name), &header, &rows)?;
    }
    let source = CsvSource {
        path: a.csv.clone(),
        target: a.target.clone(),
        image: a.image,
    };
    write_json(
        &a.out.join("metadata.json"),
        &serde_json::json!({
            "source": source,
            "seed": a.seed,
            "features": d.features,
            "mean": d.mean,
            "std": d.std,
            "image_side": d.image_side,
            "n_train": d.train.len(),
            "n_test": d.test.len(),
        }),
    )?;
    println!(
        "{} train / {} test rows, {} features{}",
        d.train.len(),
        d.test.len(),
        d.features.len(),
        d.image_side.map_or(String::new(), |h| format!(", {h}x{h} images"))
    );
    Ok(())
}
