//! Executing plans, persisting logs and producing reports.

mod execute;
pub mod log;
pub mod report;
pub mod score;
pub mod sweep;

pub use execute::{execute, run_in_memory, run_to_file, RunOptions, RunSummary};
pub use report::{build_report, Report};
pub use score::{read_scores_csv, score_log, scores_csv, ScoreFilter, ScoreSet};
pub use sweep::{run_sweep, FactorAxis, SweepResult, SweepSpec};

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::backends::BackendError;
use crate::protocol::ProtocolError;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Log(#[from] log::LogError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log does not match config: {0}")]
    ConfigMismatch(String),
    #[error("log is incomplete: {} planned trial(s) have no outcome", missing.len())]
    IncompleteLog { missing: Vec<String> },
    #[error("empty {0} filter")]
    EmptyFilter(&'static str),
    #[error("{0} not present in log")]
    NotInLog(String),
    #[error("score csv schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("sweep spec: {0}")]
    Sweep(String),
}
