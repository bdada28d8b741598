use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Task};
use crate::autodiff::Tensor;
use crate::dynamics::{block_input_scale, gen_inertia, gen_pendulum, stack_steps, Dataset, HamiltonianSystem, RegressionData, INERTIA_POINTS};
use crate::error::{Error, Result};

/// Chunk length and spacing of the trajectory tasks.
pub const CHUNK_LEN: usize = 5;
pub const CHUNK_DT: f64 = 0.2;

/// Training data of one task.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskData {
    Regression {
        train: RegressionData,
        test: RegressionData,
        /// Side length of square images, when inputs are images.
        image_side: Option<usize>,
    },
    Trajectories {
        /// Element `k` holds state `k` of every chunk.
        train: Vec<Tensor>,
        test: Vec<Tensor>,
        dt: f64,
        /// Multipliers applied to states before the Hamiltonian network,
        /// fitted on the training split.
        input_scale: Vec<f64>,
    },
}

impl TaskData {
    pub fn n_train(&self) -> usize {
        match self {
            TaskData::Regression { train, .. } => train.len(),
            TaskData::Trajectories { train, .. } => train.first().map_or(0, |t| t.shape()[0]),
        }
    }
}

/// Rows `idx` of a matrix.
pub fn select_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let d = t.shape()[1];
    let data = idx.iter().flat_map(|&i| t.data()[i * d..(i + 1) * d].iter().copied()).collect();
    Tensor::matrix(idx.len(), d, data).expect("sized")
}

/// Rows `idx` of each step tensor.
pub fn select_steps(steps: &[Tensor], idx: &[usize]) -> Vec<Tensor> {
    steps.iter().map(|t| select_rows(t, idx)).collect()
}

/// Scale factors applied to inertia data, fitted on the training split.
/// Masses are shifted and scaled, while positions and targets are only
/// scaled, so the group action commutes with the transformation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertiaScaling {
    pub mass_mean: f64,
    pub mass_std: f64,
    pub position_scale: f64,
    pub target_scale: f64,
}

impl InertiaScaling {
    pub fn fit(train: &RegressionData) -> Self {
        let (mut masses, mut pos) = (Vec::new(), Vec::new());
        for row in train.x.data().chunks(4 * INERTIA_POINTS) {
            for i in 0..INERTIA_POINTS {
                masses.push(row[4 * i]);
                pos.extend_from_slice(&row[4 * i + 1..4 * i + 4]);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let mass_mean = mean(&masses);
        let mass_std = mean(&masses.iter().map(|m| (m - mass_mean).powi(2)).collect::<Vec<_>>()).sqrt();
        let rms = |v: &[f64]| mean(&v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
        let nz = |s: f64| if s > 0.0 { s } else { 1.0 };
        Self {
            mass_mean,
            mass_std: nz(mass_std),
            position_scale: nz(rms(&pos)),
            target_scale: nz(rms(train.y.data())),
        }
    }

    pub fn apply(&self, data: &RegressionData) -> RegressionData {
        let mut x = data.x.clone();
        for row in x.data_mut().chunks_mut(4 * INERTIA_POINTS) {
            for i in 0..INERTIA_POINTS {
                row[4 * i] = (row[4 * i] - self.mass_mean) / self.mass_std;
                for v in &mut row[4 * i + 1..4 * i + 4] {
                    *v /= self.position_scale;
                }
            }
        }
        let mut y = data.y.clone();
        y.data_mut().iter_mut().for_each(|v| *v /= self.target_scale);
        RegressionData { x, y }
    }
}

/// Raw synthetic dataset of an inertia or pendulum task, as written by
/// `gen-data`. Training uses the same draws after standardization.
pub fn generate_dataset(task: Task, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    match task {
        Task::Inertia | Task::ModifiedInertia => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let modified = task == Task::ModifiedInertia;
            let train = gen_inertia(n_train, &mut rng, modified);
            let test = gen_inertia(n_test, &mut rng, modified);
            Ok(Dataset::Inertia { train, test })
        }
        Task::Pendulum | Task::WindyPendulum => {
            let system = if task == Task::WindyPendulum {
                HamiltonianSystem::windy()
            } else {
                HamiltonianSystem::default()
            };
            let data = gen_pendulum(&system, n_train, n_test, seed, CHUNK_DT, CHUNK_LEN)?;
            Ok(Dataset::Pendulum { system, data })
        }
        _ => Err(Error::Config(format!("{} is not a synthetic dynamics task", task.name()))),
    }
}

/// Builds (or reads) the data for `config`. Synthetic tasks are generated
/// from the config's data seed.
pub fn load_task(config: &ExperimentConfig) -> Result<TaskData> {
    let seed = config.data_seed();
    match config.task {
        Task::Inertia | Task::ModifiedInertia | Task::Pendulum | Task::WindyPendulum => {
            match generate_dataset(config.task, config.n_train, config.n_test, seed)? {
                Dataset::Inertia { train, test } => {
                    let s = InertiaScaling::fit(&train);
                    Ok(TaskData::Regression {
                        train: s.apply(&train),
                        test: s.apply(&test),
                        image_side: None,
                    })
                }
                Dataset::Pendulum { data, .. } => {
                    let train = stack_steps(&data.train)?;
                    Ok(TaskData::Trajectories {
                        input_scale: block_input_scale(&train),
                        test: stack_steps(&data.test)?,
                        train,
                        dt: CHUNK_DT,
                    })
                }
            }
        }
        Task::CsvRegression => {
            let src = config
                .csv
                .as_ref()
                .ok_or_else(|| Error::Config("csv-regression needs a csv source".into()))?;
            let d = ingest_csv_regression(&src.path, &src.target, src.image, seed)?;
            Ok(TaskData::Regression {
                train: d.train,
                test: d.test,
                image_side: d.image_side,
            })
        }
        Task::ShiftedPattern => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (train, test) = shifted_pattern(config.n_train, config.n_test, SHIFTED_SIDE, &mut rng);
            Ok(TaskData::Regression {
                train,
                test,
                image_side: Some(SHIFTED_SIDE),
            })
        }
    }
}

/// Tabular data after ingestion.
#[derive(Clone, Debug, PartialEq)]
pub struct IngestedData {
    pub train: RegressionData,
    pub test: RegressionData,
    pub features: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub image_side: Option<usize>,
}

/// Smallest `h` with `h * h >= n`.
pub fn image_side(n: usize) -> usize {
    let mut h = (n as f64).sqrt().floor() as usize;
    while h * h < n {
        h += 1;
    }
    h
}

/// Splits 80/20 by seeded shuffle, standardizes features with train-split
/// statistics and optionally zero-pads each feature row to an `h x h` image.
pub fn ingest_table(
    header: &[String],
    rows: &[Vec<f64>],
    target: &str,
    image: bool,
    seed: u64,
) -> Result<IngestedData> {
    let t = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::Data(format!("no target column {target:?}")))?;
    if rows.len() < 2 {
        return Err(Error::Data("need at least two rows".into()));
    }
    let features: Vec<String> = header.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, h)| h.clone()).collect();
    let nf = features.len();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((rows.len() as f64) * 0.8).round().clamp(1.0, (rows.len() - 1) as f64) as usize;
    let (train_idx, test_idx) = order.split_at(n_train);
    let feat = |r: &Vec<f64>| -> Vec<f64> { r.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, v)| *v).collect() };

    let mut mean = vec![0.0; nf];
    for &i in train_idx {
        for (m, v) in mean.iter_mut().zip(feat(&rows[i])) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_train as f64);
    let mut std = vec![0.0; nf];
    for &i in train_idx {
        for ((s, v), m) in std.iter_mut().zip(feat(&rows[i])).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| {
        *s = (*s / n_train as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    });

    let side = image.then(|| image_side(nf));
    let width = side.map_or(nf, |h| h * h);
    let build = |idx: &[usize]| -> RegressionData {
        let mut x = Vec::with_capacity(idx.len() * width);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            let f = feat(&rows[i]);
            x.extend(f.iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s));
            x.extend(std::iter::repeat(0.0).take(width - nf));
            y.push(rows[i][t]);
        }
        RegressionData {
            x: Tensor::matrix(idx.len(), width, x).expect("sized"),
            y: Tensor::matrix(idx.len(), 1, y).expect("sized"),
        }
    };
    Ok(IngestedData {
        train: build(train_idx),
        test: build(test_idx),
        features,
        mean,
        std,
        image_side: side,
    })
}

/// Reads a numeric CSV with a header row.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "{}: non-numeric cell {cell:?} in row {}, column {}",
                        path.display(),
                        line + 1,
                        header.get(c).map_or("?", |s| s.as_str())
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::Data(format!("{}: row {} has {} cells", path.display(), line + 1, row.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_numeric_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// [`ingest_table`] on a CSV file.
pub fn ingest_csv_regression(path: &Path, target: &str, image: bool, seed: u64) -> Result<IngestedData> {
    let (header, rows) = read_numeric_csv(path)?;
    ingest_table(&header, &rows, target, image, seed)
}

/// Side length of shifted-pattern images.
pub const SHIFTED_SIDE: usize = 8;

const PATTERNS: [[f64; 9]; 2] = [
    [0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0],
    [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
];

/// Binary task: a plus or an x-shaped 3x3 pattern is stamped at a uniformly
/// random position of a noisy `side x side` image; the target is +1 for the
/// plus and -1 for the x. The label is translation invariant, which a
/// convolutional equivariant path can exploit.
pub fn shifted_pattern<R: Rng + ?Sized>(
    n_train: usize,
    n_test: usize,
    side: usize,
    rng: &mut R,
) -> (RegressionData, RegressionData) {
    let mut make = |n: usize| {
        let mut x = Vec::with_capacity(n * side * side);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let class = rng.gen_range(0..2);
            let (oy, ox) = (rng.gen_range(0..side - 2), rng.gen_range(0..side - 2));
            let mut img: Vec<f64> = (0..side * side).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
            for dy in 0..3 {
                for dx in 0..3 {
                    img[(oy + dy) * side + ox + dx] += PATTERNS[class][dy * 3 + dx];
                }
            }
            x.extend(img);
            y.push(if class == 0 { 1.0 } else { -1.0 });
        }
        RegressionData {
            x: Tensor::matrix(n, side * side, x).expect("sized"),
            y: Tensor::matrix(n, 1, y).expect("sized"),
        }
    };
    let train = make(n_train);
    let test = make(n_test);
    (train, test)
}
