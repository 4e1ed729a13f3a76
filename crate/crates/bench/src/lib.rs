//! Benchmark harness for the CMDP learners: instance generators, experiment
//! configuration, seeded campaigns with per-run CSV ledgers, and summaries.

pub mod campaign;
pub mod config;
pub mod instance;
pub mod summary;

use cmdp_core::CmdpError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CmdpError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("run {run_id} failed: {reason}")]
    Run { run_id: String, reason: String },
}
