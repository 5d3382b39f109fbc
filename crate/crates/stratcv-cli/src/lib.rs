//! Batch experiment harness for the stratcv engine: flat key-value configs,
//! benchmark presets, and report/ECDF/summary file output.

pub mod config;
pub mod experiment;
pub mod preset;

pub use config::{ConfigError, ExperimentConfig, Method, OUTPUT_DIR_ENV};
pub use experiment::{run_experiment, summary_csv, HarnessError, RunOutputs, TESTING_CHUNK};
pub use preset::{list_presets, preset_config, Preset};
