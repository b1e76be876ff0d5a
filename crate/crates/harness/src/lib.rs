//! Experiment harness for privacy-label unit training: TOML configs, the
//! conceal / train / evaluate / sweep / reproduce workflows, and the
//! artifacts they leave on disk.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod reproduce;

pub use commands::{
    cmd_conceal, cmd_evaluate, cmd_evaluate_experiment, cmd_sweep, cmd_train, ConcealSummary,
    SweepTable,
};
pub use config::{ExperimentConfig, GridSection};
pub use error::{HarnessError, Result, EXIT_NUMERICAL, EXIT_USAGE};
pub use pipeline::{Layout, Selection};
pub use reproduce::{cmd_reproduce, reproduce_config, ReproduceReport, KNOWN_DATASETS};
