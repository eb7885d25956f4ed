//! Datasets, experiment execution, metrics, analyses and trace files.

pub mod analysis;
pub mod dataset;
pub mod metrics;
pub mod runner;
pub mod sweep;
pub mod trace_file;
pub mod verify;

use thiserror::Error;

use crate::backend::BackendError;
use crate::orchestrator::RunError;

pub use analysis::{
    pairwise_svr, stratify_and_rank, Bucket, QuestionSignals, RankSignal, StratumRow,
};
pub use dataset::{filter_dataset, load_dataset, read_dataset, DatasetError, DatasetRecord};
pub use metrics::{
    count_ncomm, count_tokens, read_report_csv, score_accuracy, write_report_csv, MethodReport,
    QuestionRow, ReportError,
};
pub use runner::{
    filter_inputs, generate_inputs, run_method, run_method_all, run_methods, thread_pool, tune_sid,
    MethodRun, MethodSettings, QuestionInput, SidTuning,
};
pub use sweep::{
    ablation_sweep, accuracy_at_tokens, default_thresholds, format_sweep_tsv, SweepPoint,
};
pub use trace_file::{
    load_trace, load_trace_dir, load_traces, persist_trace, persist_traces, read_traces,
    trace_files, write_traces, TraceError,
};
pub use verify::{recompute_final_answer, verify_report, verify_traces, Mismatch};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Report(#[from] ReportError),
}
