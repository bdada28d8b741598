use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::train::{MetricsRecord, RunStatus, TrainOutcome};
use crate::error::{Error, Result};

/// Columns of `metrics.csv`, in order. Values are full precision floats;
/// `prior_penalty` is the weighted term that enters the objective, so
/// `train_loss + prior_penalty == objective` on every row.
pub const METRICS_HEADER: [&str; 6] = [
    "epoch",
    "train_loss",
    "prior_penalty",
    "objective",
    "test_mse",
    "equivariance_error",
];

/// Hex SHA-256 of the canonical JSON of `config`, ignoring the output
/// location.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.out = None;
    let json = serde_json::to_string(&c)?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

/// Directory of one run, created (and probed for writability) before any
/// training happens.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub hash: String,
}

impl RunDir {
    /// Creates `<root>/<timestamp>-<hash prefix>` and writes `config.json`
    /// and `env.json` into it.
    pub fn prepare(root: &Path, config: &ExperimentConfig) -> Result<Self> {
        let hash = config_hash(config)?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut path = root.join(format!("{stamp}-{}", &hash[..12]));
        let mut k = 1;
        while path.exists() {
            path = root.join(format!("{stamp}-{}-{k}", &hash[..12]));
            k += 1;
        }
        fs::create_dir(&path).map_err(|e| Error::io(&path, e))?;
        let dir = Self { path, hash };
        dir.write_file("config.json", &config.to_json()?)?;
        dir.write_file("env.json", &serde_json::to_string_pretty(&EnvInfo::capture(config, &dir.hash))?)?;
        Ok(dir)
    }

    pub fn write_file(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.path.join(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))
    }

    /// Writes metrics, timing, status and the final checkpoint.
    pub fn write_outcome(&self, outcome: &TrainOutcome) -> Result<()> {
        write_metrics(&self.path.join("metrics.csv"), &outcome.metrics)?;
        write_timing(&self.path.join("timing.csv"), &outcome.metrics)?;
        self.write_file("status.json", &serde_json::to_string_pretty(&outcome.status)?)?;
        outcome.model.checkpoint().write(&self.path)
    }
}

/// Environment recorded next to each run.
#[derive(Clone, Debug, Serialize)]
pub struct EnvInfo {
    pub crate_version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub started: String,
}

impl EnvInfo {
    pub fn capture(config: &ExperimentConfig, hash: &str) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config_hash: hash.to_string(),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: rayon::current_num_threads(),
            started: chrono::Utc::now().to_rfc3339(),
        }
    }
}

pub fn write_metrics(path: &Path, metrics: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            m.train_loss.to_string(),
            m.prior_penalty.to_string(),
            m.objective.to_string(),
            m.test_mse.to_string(),
            m.equivariance_error.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Data(format!("unexpected metrics header {header:?}")));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

fn write_timing(path: &Path, metrics: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "wall_clock_s"])?;
    for m in metrics {
        w.write_record([m.epoch.to_string(), m.wall_clock.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Prepares the run directory (when `config.out` is set), trains, and
/// persists the outcome. An unwritable output location fails before
/// training starts.
pub fn train_and_persist(config: &ExperimentConfig) -> Result<(TrainOutcome, Option<RunDir>)> {
    config.validate()?;
    let dir = config.out.as_deref().map(|root| RunDir::prepare(root, config)).transpose()?;
    let outcome = super::train::train(config)?;
    if let Some(d) = &dir {
        d.write_outcome(&outcome)?;
    }
    if let RunStatus::Diverged { epoch, loss } = outcome.status {
        log::warn!("run recorded as failed: diverged at epoch {epoch} (objective {loss})");
    }
    Ok((outcome, dir))
}
