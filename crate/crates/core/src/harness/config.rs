use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::ModelKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Inertia,
    ModifiedInertia,
    Pendulum,
    WindyPendulum,
    CsvRegression,
    /// Synthetic images whose label depends on a pattern placed at a random
    /// position.
    ShiftedPattern,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Inertia => "inertia",
            Task::ModifiedInertia => "modified-inertia",
            Task::Pendulum => "pendulum",
            Task::WindyPendulum => "windy-pendulum",
            Task::CsvRegression => "csv-regression",
            Task::ShiftedPattern => "shifted-pattern",
        }
    }

    pub fn is_inertia(self) -> bool {
        matches!(self, Task::Inertia | Task::ModifiedInertia)
    }

    pub fn is_pendulum(self) -> bool {
        matches!(self, Task::Pendulum | Task::WindyPendulum)
    }

    /// Group whose symmetry the clean version of the task has.
    pub fn default_group(self) -> &'static str {
        if self.is_inertia() {
            "O(3)"
        } else if self.is_pendulum() {
            "O(2)z"
        } else {
            "trivial1"
        }
    }

    /// Text forms of the model's input and output representations.
    pub fn reps(self) -> Option<(&'static str, &'static str)> {
        if self.is_inertia() {
            Some(("(R+V)^5", "V*V"))
        } else if self.is_pendulum() {
            Some(("V^4", "R"))
        } else {
            None
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = match s.to_lowercase().as_str() {
            "inertia" => Task::Inertia,
            "modified-inertia" => Task::ModifiedInertia,
            "pendulum" => Task::Pendulum,
            "windy-pendulum" => Task::WindyPendulum,
            "csv-regression" | "csv" => Task::CsvRegression,
            "shifted-pattern" => Task::ShiftedPattern,
            _ => {
                return Err(Error::Unknown {
                    kind: "task",
                    name: s.to_string(),
                })
            }
        };
        Ok(t)
    }
}

/// Source of a tabular regression task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    pub target: String,
    #[serde(default = "yes")]
    pub image: bool,
}

fn yes() -> bool {
    true
}

/// Everything that determines a training run. Serialized verbatim into each
/// run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelKind,
    /// Group the model is built over; `None` uses the task's own symmetry.
    pub group: Option<String>,
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Cosine decay of the learning rate to zero over `epochs`.
    pub cosine: bool,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Seed of data generation and splits; `None` uses `seed`.
    pub data_seed: Option<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub width: usize,
    pub depth: usize,
    /// Hidden channels of convolutional models.
    pub channels: usize,
    /// Weight of the prior penalty in the objective; `None` uses 1, i.e.
    /// mean data loss plus the full negative log prior.
    pub prior_weight: Option<f64>,
    /// Metrics are recorded every this many epochs and at the last epoch.
    pub eval_every: usize,
    /// Group elements sampled per equivariance-error evaluation.
    pub equivariance_samples: usize,
    /// Test rows used for the equivariance error; `None` uses all.
    pub equivariance_rows: Option<usize>,
    pub csv: Option<CsvSource>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Inertia,
            model: ModelKind::Rpp,
            group: None,
            sigma_a2: 1e5,
            sigma_b2: 1.0,
            epochs: 500,
            lr: 3e-3,
            cosine: false,
            batch_size: None,
            seed: 0,
            data_seed: None,
            n_train: 1000,
            n_test: 1000,
            width: 128,
            depth: 3,
            channels: 4,
            prior_weight: None,
            eval_every: 1,
            equivariance_samples: 10,
            equivariance_rows: None,
            csv: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for a task: 500 full-batch epochs on 1000/1000 inertia
    /// samples, 1000 epochs with batch 500 on 500/500 pendulum chunks.
    pub fn for_task(task: Task, model: ModelKind) -> Self {
        let base = Self {
            task,
            model,
            ..Self::default()
        };
        if task.is_pendulum() {
            Self {
                epochs: 1000,
                n_train: 500,
                n_test: 500,
                batch_size: Some(500),
                ..base
            }
        } else {
            base
        }
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn group_name(&self) -> String {
        self.group.clone().unwrap_or_else(|| self.task.default_group().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if self.prior_weight.is_some_and(|w| !(w >= 0.0)) {
            return Err(Error::Config("prior weight must be non-negative".into()));
        }
        if self.task == Task::CsvRegression && self.csv.is_none() {
            return Err(Error::Config("csv-regression needs a csv source".into()));
        }
        if self.model == ModelKind::RppConv && !matches!(self.task, Task::CsvRegression | Task::ShiftedPattern) {
            return Err(Error::Config("rpp-conv models need an image task".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
