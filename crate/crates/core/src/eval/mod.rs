//! Ranking metrics, prediction dumps, reports and run comparison.

mod compare;
mod dump;
mod metrics;
mod report;

use thiserror::Error;

pub use compare::{bootstrap_delta, compare_runs, BootstrapResult, RunComparison, BOOTSTRAP_RESAMPLES};
pub use dump::{read_dump, write_dump, write_dump_delimited, PredictionRecord, ScoredLabel};
pub use metrics::{
    accuracy, accuracy_plus_parent, class_table_tsv, combined_accuracy, dedup, hits_at_k, per_class_f1,
    top_confusions, ClassStats, Confusion,
};
pub use report::{combined_outcomes, evaluate, EvalReport, OutputReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    Empty,
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("label {0} is not in the contact-type tree")]
    UnknownLabel(String),
    #[error("prediction dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
