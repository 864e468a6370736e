//! Configuration, experiment drivers and data export for `chanceopt-core`.
//!
//! Every verb of the `chanceopt` binary is a function here, so tests and the
//! acceptance suite drive the same code paths as the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod optimize;
pub mod output;
pub mod sample_field;
pub mod scaling;
pub mod verify;

pub use config::{Engine, ExperimentConfig, Overrides};
pub use error::CliError;
pub use experiment::Experiment;
pub use optimize::{optimize_config, run_optimize, RunOutcome, RunReport};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CHANCEOPT_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`] if it is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| CliError::Config(format!("{THREADS_ENV} = {v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
