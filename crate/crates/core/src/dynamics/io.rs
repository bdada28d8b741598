use std::path::Path;

use serde::{Deserialize, Serialize};

use super::inertia::{RegressionData, INERTIA_POINTS};
use super::pendulum::{HamiltonianSystem, PendulumData, TrajectoryChunk, STATE_DIM};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Version tag of the target formulas, bumped whenever generated values change.
pub const FORMULA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Inertia {
        train: RegressionData,
        test: RegressionData,
    },
    Pendulum {
        system: HamiltonianSystem,
        data: PendulumData,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: String,
    pub formula_version: u32,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Sampling rules and physical constants.
    pub constants: serde_json::Value,
}

impl DatasetMeta {
    pub fn new(task: &str, seed: u64, dataset: &Dataset) -> Self {
        let (n_train, n_test, constants) = match dataset {
            Dataset::Inertia { train, test } => (
                train.len(),
                test.len(),
                serde_json::json!({
                    "points": INERTIA_POINTS,
                    "mass": "|N(0,1)| + 0.1",
                    "position": "N(0, I_3)",
                    "modified_term": "0.3 I^2 z z^T I",
                }),
            ),
            Dataset::Pendulum { system, data } => (
                data.train.len(),
                data.test.len(),
                serde_json::json!({
                    "system": system,
                    "dt": data.train.first().or(data.test.first()).map_or(0.0, |c| c.dt),
                    "chunk_len": data.train.first().or(data.test.first()).map_or(0, |c| c.states.len()),
                    "ground_truth_substeps": 10,
                }),
            ),
        };
        Self {
            task: task.to_string(),
            formula_version: FORMULA_VERSION,
            seed,
            n_train,
            n_test,
            constants,
        }
    }
}

fn inertia_header() -> Vec<String> {
    let mut h = Vec::new();
    for i in 1..=INERTIA_POINTS {
        h.push(format!("m{i}"));
        for a in ["x", "y", "z"] {
            h.push(format!("x{i}_{a}"));
        }
    }
    h.extend((0..9).map(|k| format!("y{}{}", k / 3, k % 3)));
    h
}

fn pendulum_header() -> Vec<String> {
    let mut h = vec!["chunk".to_string(), "step".to_string()];
    for block in ["x1", "x2", "p1", "p2"] {
        for a in ["x", "y", "z"] {
            h.push(format!("{block}_{a}"));
        }
    }
    h
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, expected {width}",
                path.display(),
                line + 1,
                rec.len()
            )));
        }
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Data(format!("{}: row {}: {e}", path.display(), line + 1)))?);
    }
    Ok(rows)
}

fn regression_rows(d: &RegressionData) -> impl Iterator<Item = Vec<f64>> + '_ {
    let (dx, dy) = (d.x.shape()[1], d.y.shape()[1]);
    (0..d.len()).map(move |i| {
        let mut row = d.x.data()[i * dx..(i + 1) * dx].to_vec();
        row.extend_from_slice(&d.y.data()[i * dy..(i + 1) * dy]);
        row
    })
}

fn chunk_rows(chunks: &[TrajectoryChunk]) -> impl Iterator<Item = Vec<f64>> + '_ {
    chunks.iter().enumerate().flat_map(|(c, chunk)| {
        chunk.states.iter().enumerate().map(move |(k, s)| {
            let mut row = vec![c as f64, k as f64];
            row.extend_from_slice(s);
            row
        })
    })
}

/// Writes `train.csv`, `test.csv` and `metadata.json` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset, meta: &DatasetMeta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match dataset {
        Dataset::Inertia { train, test } => {
            let h = inertia_header();
            write_csv(&dir.join("train.csv"), &h, regression_rows(train))?;
            write_csv(&dir.join("test.csv"), &h, regression_rows(test))?;
        }
        Dataset::Pendulum { data, .. } => {
            let h = pendulum_header();
            write_csv(&dir.join("train.csv"), &h, chunk_rows(&data.train))?;
            write_csv(&dir.join("test.csv"), &h, chunk_rows(&data.test))?;
        }
    }
    let path = dir.join("metadata.json");
    std::fs::write(&path, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&path, e))
}

fn to_regression(rows: Vec<Vec<f64>>) -> RegressionData {
    let d_in = 4 * INERTIA_POINTS;
    let n = rows.len();
    let mut x = Vec::with_capacity(n * d_in);
    let mut y = Vec::with_capacity(n * 9);
    for r in rows {
        x.extend_from_slice(&r[..d_in]);
        y.extend_from_slice(&r[d_in..]);
    }
    RegressionData {
        x: Tensor::matrix(n, d_in, x).expect("sized"),
        y: Tensor::matrix(n, 9, y).expect("sized"),
    }
}

fn to_chunks(rows: Vec<Vec<f64>>, dt: f64) -> Result<Vec<TrajectoryChunk>> {
    let mut chunks: Vec<TrajectoryChunk> = Vec::new();
    for r in rows {
        let (c, k) = (r[0] as usize, r[1] as usize);
        if c == chunks.len() {
            chunks.push(TrajectoryChunk { states: Vec::new(), dt });
        }
        let chunk = chunks
            .get_mut(c)
            .filter(|ch| ch.states.len() == k)
            .ok_or_else(|| Error::Data(format!("rows out of order at chunk {c}, step {k}")))?;
        chunk.states.push(r[2..].to_vec());
    }
    Ok(chunks)
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(Dataset, DatasetMeta)> {
    let path = dir.join("metadata.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)?;
    let dataset = if meta.task.contains("inertia") {
        let w = 4 * INERTIA_POINTS + 9;
        Dataset::Inertia {
            train: to_regression(read_csv(&dir.join("train.csv"), w)?),
            test: to_regression(read_csv(&dir.join("test.csv"), w)?),
        }
    } else if meta.task.contains("pendulum") {
        let system: HamiltonianSystem = serde_json::from_value(meta.constants["system"].clone())?;
        let dt = meta.constants["dt"].as_f64().unwrap_or(0.0);
        let w = 2 + STATE_DIM;
        Dataset::Pendulum {
            system,
            data: PendulumData {
                train: to_chunks(read_csv(&dir.join("train.csv"), w)?, dt)?,
                test: to_chunks(read_csv(&dir.join("test.csv"), w)?, dt)?,
            },
        }
    } else {
        return Err(Error::Unknown {
            kind: "dataset task",
            name: meta.task,
        });
    };
    Ok((dataset, meta))
}
