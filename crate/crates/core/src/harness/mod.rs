//! Experiment orchestration: configurations, presets, multi-trial runs and
//! CSV output.

mod config;
mod experiment;
mod presets;

pub use config::{ExperimentConfig, Learner, MaskMode, Readout, Task};
pub use experiment::{
    aggregate_path, build_network, mean_and_se, run_experiment, run_trial, run_trials, Aggregate,
    AggregateRow, LearningCurve, AGGREGATE_HEADER, RAW_HEADER,
};
pub use presets::{preset, PRESET_NAMES};
