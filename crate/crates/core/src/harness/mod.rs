//! Experiment configuration, training, persistence and the experiment
//! drivers built on them.

mod config;
mod data;
mod experiments;
mod optim;
mod persist;
mod train;


pub use config::{CsvSource, ExperimentConfig, Task};
pub use data::{
    generate_dataset, image_side, ingest_csv_regression, ingest_table, load_task, read_numeric_csv, select_rows, select_steps,
    shifted_pattern, write_numeric_csv, IngestedData, InertiaScaling, TaskData, CHUNK_DT, CHUNK_LEN, SHIFTED_SIDE,
};
pub use experiments::{
    ensemble, prior_grid, prior_grid_cells, run_regimes, summarize_regimes, write_grid_surface, write_rows,
    write_traces, EnsembleTrace, Family, GridCell, Quartiles, Regime, RegimeRow, RegimeSummary, RunSummary,
    DEFAULT_GRID, REGIME_MODELS,
};
pub use optim::{adam_step, cosine_lr, AdamState};
pub use persist::{config_hash, read_metrics, train_and_persist, write_metrics, EnvInfo, RunDir, METRICS_HEADER};
pub use train::{
    model_equivariance_error, model_spec, test_mse, train, train_on, MetricsRecord, RunStatus, SolverCache,
    TrainOutcome, DIVERGENCE_THRESHOLD,
};
