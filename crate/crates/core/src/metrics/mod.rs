//! Aggregate metrics: pass@k, reduction statistics, the Mann–Whitney U
//! test, and report export.

mod export;
mod mww;
mod pass_at_k;
mod reduction;

pub use export::{build_report, export_reports, pct, EvalReport, PassAtKRow, PromptLengthRow, RepairRecord, OVERALL};
pub use mww::{mww_exact_p, mww_normal_p, mww_test, MwwMethod, MwwResult, EXACT_LIMIT};
pub use pass_at_k::{pass_at_k, MatrixRow, VerdictMatrix};
pub use reduction::{mean, median, reduction_report, GroupStats, ReductionReport, ReductionRow};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("verdict matrix has no rows")]
    EmptyMatrix,
    #[error("k={k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("every value in both samples is identical")]
    DegenerateSamples,
    #[error("sample is empty or contains NaN")]
    EmptySample,
}
