//! Experiment front-end: configuration files, CSV metrics and summaries.

mod config;
mod experiment;
mod summarize;

pub use config::{parse_config, parse_config_str, print_config, ClientGroup, DatasetConfig, ExperimentConfig};
pub use experiment::{load_datasets, run_experiment, RunSummary, CSV_HEADER};
pub use summarize::{read_run, summarize, Cell, RunRecord, Summary, TABLE_STRATEGIES};
