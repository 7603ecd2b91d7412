//! Configuration, experiment orchestration and the command-line front end.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod selftest;

pub use cli::cli_dispatch;
pub use config::{Config, ExperimentId, ExperimentSpec};
pub use experiment::{method_means, run_experiment, sort_records, write_csv, Method, RunRecord, CSV_HEADER};
pub use selftest::{run_selftest, SuiteResult};
