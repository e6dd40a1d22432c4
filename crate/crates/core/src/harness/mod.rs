//! Run configuration and the `evosynth` command line.

mod cli;
mod config;

pub use cli::{checkpoint_path, cli_run, run_experiment, train_ancestor, RunOutcome, EXIT_RUNTIME, EXIT_USAGE};
pub use config::{threads_from_env, DataPaths, RunConfig, THREADS_ENV};
