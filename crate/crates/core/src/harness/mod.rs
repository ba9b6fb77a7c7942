//! Experiment configuration, training loop, the prune-and-train pipeline,
//! sweeps, result files and checkpoints.

pub mod checkpoint;
mod config;
mod output;
mod pipeline;
mod train;

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint};
pub use config::{
    DatasetKind, ExperimentConfig, LearnedMaskBlock, ScheduleConfig, ScheduleState, TimingConfig,
};
pub use output::{emit_csv, emit_json, emit_layer_flops, read_csv, read_json};
pub use pipeline::{
    build_for, config_digest, dataset_dir, load_data, prune_mask, run_experiment, sweep, sweep_configs,
    ExperimentData, ExperimentOutcome, ResultRow, DATA_ENV,
};
pub use train::{label_smooth, train, EpochStats, TrainOptions};
