//! Command-line experiments.

mod commands;
mod config;
mod output;

pub use commands::{cmd_ablate, cmd_align, cmd_attack, cmd_depth, cmd_train, load, Report, RunOutcome, ABLATION_VARIANTS};
pub use config::{dataset_defaults, Algo, ConfigPatch, DatasetDefaults, ExperimentConfig, SplitMode};
pub use output::{epoch_table, read_csv, summarize, write_csv, Stats};
