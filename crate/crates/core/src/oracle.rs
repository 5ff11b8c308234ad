//! Output comparison and the differential interestingness predicate.
//!
//! A candidate input is interesting when the reference program handles it
//! normally and the buggy program either fails on it or prints something
//! different. Inputs on which the reference itself fails are never
//! interesting: they fall outside the domain where the reference defines
//! correct behaviour.

use serde::{Deserialize, Serialize};

use crate::runner::{execute, CompiledProgram, RunOutcome, RunnerError, ToolchainConfig};

/// Decode lossily as UTF-8, normalize line endings to `\n`, strip trailing
/// whitespace from every line and drop trailing blank lines.
pub fn normalize_output(raw: &[u8]) -> String {
    let text = String::from_utf8_lossy(raw);
    let mut lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.trim_end_matches(|c: char| c.is_whitespace()))
        .collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Per-line trailing whitespace and trailing blank lines are ignored.
    #[default]
    Lenient,
    /// Byte-for-byte equality.
    Strict,
}

impl Comparison {
    pub fn same(self, a: &[u8], b: &[u8]) -> bool {
        match self {
            Comparison::Lenient => normalize_output(a) == normalize_output(b),
            Comparison::Strict => a == b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictReason {
    OutputDiff,
    BuggyFailed,
    NotInteresting,
    ReferenceFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub interesting: bool,
    pub reason: VerdictReason,
    pub ref_outcome: RunOutcome,
    /// `None` only when the fast path skipped the buggy run.
    pub buggy_outcome: Option<RunOutcome>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeOptions {
    pub comparison: Comparison,
    /// Skip the buggy run once the reference has failed.
    pub fast_path: bool,
}

/// Classify a pair of outcomes (reference first).
pub fn classify(
    ref_outcome: &RunOutcome,
    buggy_outcome: &RunOutcome,
    comparison: Comparison,
) -> VerdictReason {
    if !ref_outcome.is_ok() {
        VerdictReason::ReferenceFailed
    } else if !buggy_outcome.is_ok() {
        VerdictReason::BuggyFailed
    } else if comparison.same(&ref_outcome.stdout, &buggy_outcome.stdout) {
        VerdictReason::NotInteresting
    } else {
        VerdictReason::OutputDiff
    }
}

pub fn judge(
    candidate_input: &[u8],
    reference: &CompiledProgram,
    buggy: &CompiledProgram,
    cfg: &ToolchainConfig,
    opts: JudgeOptions,
) -> Result<Verdict, RunnerError> {
    let ref_outcome = execute(reference, candidate_input, cfg)?;
    if opts.fast_path && !ref_outcome.is_ok() {
        return Ok(Verdict {
            interesting: false,
            reason: VerdictReason::ReferenceFailed,
            ref_outcome,
            buggy_outcome: None,
        });
    }
    let buggy_outcome = execute(buggy, candidate_input, cfg)?;
    let reason = classify(&ref_outcome, &buggy_outcome, opts.comparison);
    Ok(Verdict {
        interesting: matches!(reason, VerdictReason::OutputDiff | VerdictReason::BuggyFailed),
        reason,
        ref_outcome,
        buggy_outcome: Some(buggy_outcome),
    })
}

/// A reference/buggy pair bound to a toolchain: the predicate driving
/// reduction of one bug.
#[derive(Debug, Clone)]
pub struct DifferentialOracle {
    pub reference: CompiledProgram,
    pub buggy: CompiledProgram,
    pub toolchain: ToolchainConfig,
    pub options: JudgeOptions,
}

impl DifferentialOracle {
    pub fn judge(&self, input: &[u8]) -> Result<Verdict, RunnerError> {
        judge(input, &self.reference, &self.buggy, &self.toolchain, self.options)
    }

    pub fn is_interesting(&self, input: &[u8]) -> Result<bool, RunnerError> {
        Ok(self.judge(input)?.interesting)
    }
}
