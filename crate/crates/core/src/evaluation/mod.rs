//! Classification, retrieval and generation metrics, and the benchmark
//! harness that runs solvers over test equations and writes report bundles.

mod benchmark;
mod metrics;

use thiserror::Error;

pub use benchmark::{
    mean_std, run_benchmark, strip_elapsed, trace_file_name, AggregateRow, BenchmarkReport, MeanStd,
    RunMetrics, SeedSolvers, TRACE_HEADER,
};
pub use metrics::{
    balanced_accuracy, char_accuracy, classification_metrics, generation_metrics, hit_at_k,
    ClassificationMetrics, GenerationMetrics, Rate, RetrievalMetrics, HIT_KS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
