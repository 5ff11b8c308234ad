//! Input reduction: the built-in ddmin engine, the external reducer-script
//! protocol, and the one-shot pure-LLM baseline.
//!
//! All three engines produce a [`ReductionResult`] with the same semantics:
//! a `Success` strictly shrinks the input and has been re-judged interesting
//! by the harness; every other status forwards the original input unchanged.

mod ddmin;
mod external;
mod pure_llm;

pub use ddmin::{ddmin, DdminOptions};
pub use external::{run_external_reducer, ExternalReducerConfig, ENV_BUDGET_SECS, ENV_BUGGY_CMD,
    ENV_INPUT, ENV_OUTPUT, ENV_REF_CMD, ENV_RUN_TIMEOUT_SECS};
pub use pure_llm::{build_pure_llm_prompt, pure_llm_reduce};

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Bug, Task};
use crate::oracle::DifferentialOracle;

/// Everything an engine needs to know about the bug being reduced.
#[derive(Debug, Clone, Copy)]
pub struct BugContext<'a> {
    pub task: &'a Task,
    pub bug: &'a Bug,
    pub oracle: &'a DifferentialOracle,
    /// The original failure-inducing input.
    pub failing_input: &'a [u8],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    /// One unit per line, terminator included.
    #[default]
    Line,
    Byte,
    /// A maximal non-whitespace run together with the whitespace after it.
    WhitespaceToken,
}

impl FromStr for UnitKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "line" => Ok(UnitKind::Line),
            "byte" => Ok(UnitKind::Byte),
            "token" | "whitespace_token" => Ok(UnitKind::WhitespaceToken),
            other => Err(format!("unknown unit kind {other:?} (line, byte, token)")),
        }
    }
}

/// An input split into units that can be deleted independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedInput {
    pub units: Vec<Vec<u8>>,
    pub unit_kind: UnitKind,
    /// Inserted between selected units when rendering. Units carry their own
    /// separators for every built-in kind, so this is empty by default.
    pub joiner: Vec<u8>,
}

impl ChunkedInput {
    pub fn split(input: &[u8], unit_kind: UnitKind) -> Self {
        let units = match unit_kind {
            UnitKind::Line => input
                .split_inclusive(|&b| b == b'\n')
                .map(<[u8]>::to_vec)
                .collect(),
            UnitKind::Byte => input.iter().map(|&b| vec![b]).collect(),
            UnitKind::WhitespaceToken => split_tokens(input),
        };
        ChunkedInput {
            units,
            unit_kind,
            joiner: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Render the units at `selection` (ascending indices) back into bytes.
    pub fn render(&self, selection: &[usize]) -> Vec<u8> {
        let mut out = Vec::new();
        for (i, &idx) in selection.iter().enumerate() {
            if i > 0 {
                out.extend_from_slice(&self.joiner);
            }
            out.extend_from_slice(&self.units[idx]);
        }
        out
    }

    pub fn render_all(&self) -> Vec<u8> {
        let all: Vec<usize> = (0..self.units.len()).collect();
        self.render(&all)
    }
}

fn split_tokens(input: &[u8]) -> Vec<Vec<u8>> {
    let mut units: Vec<Vec<u8>> = Vec::new();
    let mut i = 0;
    // Leading whitespace sticks to the first token.
    let mut current = Vec::new();
    while i < input.len() && input[i].is_ascii_whitespace() {
        current.push(input[i]);
        i += 1;
    }
    while i < input.len() {
        while i < input.len() && !input[i].is_ascii_whitespace() {
            current.push(input[i]);
            i += 1;
        }
        while i < input.len() && input[i].is_ascii_whitespace() {
            current.push(input[i]);
            i += 1;
        }
        units.push(std::mem::take(&mut current));
    }
    if !current.is_empty() {
        units.push(current);
    }
    units
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReductionStatus {
    Success,
    NoShrink,
    TimedOut,
    ReducerError,
}

impl fmt::Display for ReductionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("compression rate undefined for original={original}, reduced={reduced}")]
pub struct DomainError {
    pub original: u64,
    pub reduced: u64,
}

/// `1 - reduced/original` as an exact fraction.
pub fn compression_rate(original_bytes: u64, reduced_bytes: u64) -> Result<Ratio<u64>, DomainError> {
    if original_bytes == 0 || reduced_bytes > original_bytes {
        return Err(DomainError {
            original: original_bytes,
            reduced: reduced_bytes,
        });
    }
    Ok(Ratio::new(original_bytes - reduced_bytes, original_bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    pub reduced_input: Vec<u8>,
    pub original_bytes: u64,
    pub status: ReductionStatus,
    pub wall_time_secs: f64,
    pub candidates_tried: usize,
    /// Human-readable cause for `ReducerError` / `TimedOut`.
    pub detail: Option<String>,
}

impl ReductionResult {
    /// Result that forwards the original input.
    pub(crate) fn fallback(
        i0: &[u8],
        status: ReductionStatus,
        wall_time_secs: f64,
        candidates_tried: usize,
        detail: Option<String>,
    ) -> Self {
        ReductionResult {
            reduced_input: i0.to_vec(),
            original_bytes: i0.len() as u64,
            status,
            wall_time_secs,
            candidates_tried,
            detail,
        }
    }

    pub fn reduced_bytes(&self) -> u64 {
        self.reduced_input.len() as u64
    }

    /// Compression rate; zero for an empty original input.
    pub fn compression_rate(&self) -> Ratio<u64> {
        compression_rate(self.original_bytes, self.reduced_bytes())
            .unwrap_or_else(|_| Ratio::from_integer(0))
    }

    pub fn summary(&self) -> ReductionSummary {
        let rho = self.compression_rate();
        ReductionSummary {
            status: self.status,
            original_bytes: self.original_bytes,
            reduced_bytes: self.reduced_bytes(),
            compression_rate: *rho.numer() as f64 / *rho.denom() as f64,
            wall_time_secs: self.wall_time_secs,
            candidates_tried: self.candidates_tried,
            detail: self.detail.clone(),
        }
    }
}

/// Serializable view of a [`ReductionResult`] without the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub status: ReductionStatus,
    pub original_bytes: u64,
    pub reduced_bytes: u64,
    pub compression_rate: f64,
    pub wall_time_secs: f64,
    pub candidates_tried: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ReductionSummary {
    pub fn compression_rate_exact(&self) -> Ratio<u64> {
        compression_rate(self.original_bytes, self.reduced_bytes)
            .unwrap_or_else(|_| Ratio::from_integer(0))
    }
}

/// Classify a candidate that the harness has verified as interesting.
pub(crate) fn accept_candidate(
    i0: &[u8],
    candidate: Vec<u8>,
    wall_time_secs: f64,
    candidates_tried: usize,
) -> ReductionResult {
    if candidate.len() < i0.len() {
        ReductionResult {
            reduced_input: candidate,
            original_bytes: i0.len() as u64,
            status: ReductionStatus::Success,
            wall_time_secs,
            candidates_tried,
            detail: None,
        }
    } else {
        ReductionResult::fallback(i0, ReductionStatus::NoShrink, wall_time_secs, candidates_tried, None)
    }
}

/// Re-judge a candidate produced outside the harness. Anything the oracle
/// does not confirm is discarded and the original input is forwarded.
pub(crate) fn settle_external(
    ctx: &BugContext<'_>,
    candidate: Vec<u8>,
    wall_time_secs: f64,
    candidates_tried: usize,
) -> ReductionResult {
    let i0 = ctx.failing_input;
    match ctx.oracle.judge(&candidate) {
        Ok(v) if v.interesting => accept_candidate(i0, candidate, wall_time_secs, candidates_tried),
        Ok(v) => ReductionResult::fallback(
            i0,
            ReductionStatus::ReducerError,
            wall_time_secs,
            candidates_tried,
            Some(format!("candidate rejected by oracle ({:?}); rolled back", v.reason)),
        ),
        Err(e) => ReductionResult::fallback(
            i0,
            ReductionStatus::ReducerError,
            wall_time_secs,
            candidates_tried,
            Some(format!("oracle error: {e}")),
        ),
    }
}
