//! Batch front end: builds models, runs cone checks, flows and experiments,
//! and writes a single machine-readable report per run.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod commands;
pub mod config;
pub mod report;

pub use commands::run;
pub use config::{Cli, Command, ExperimentConfig};
pub use report::RunReport;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] curvlab::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const VIOLATIONS: i32 = 2;
}

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CURVLAB_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`] if set.
pub fn init_threads() -> Result<()> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let threads: usize = value
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV}='{value}' is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}
