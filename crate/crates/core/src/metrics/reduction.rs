use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::corpus::Difficulty;
use crate::reducer::{ReductionStatus, ReductionSummary};

/// Reduction outcome of one bug, without timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub task_id: String,
    pub bug_id: String,
    pub difficulty: Difficulty,
    pub status: ReductionStatus,
    pub original_bytes: u64,
    pub reduced_bytes: u64,
    pub candidates_tried: usize,
}

impl ReductionRow {
    pub fn new(task_id: &str, bug_id: &str, difficulty: Difficulty, s: &ReductionSummary) -> Self {
        ReductionRow {
            task_id: task_id.into(),
            bug_id: bug_id.into(),
            difficulty,
            status: s.status,
            original_bytes: s.original_bytes,
            reduced_bytes: s.reduced_bytes,
            candidates_tried: s.candidates_tried,
        }
    }

    pub fn compression_rate(&self) -> Ratio<u64> {
        crate::reducer::compression_rate(self.original_bytes, self.reduced_bytes)
            .unwrap_or_else(|_| Ratio::from_integer(0))
    }
}

/// Counts and compression statistics for one group of bugs. Mean and
/// median are taken over successful reductions only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub mean_compression: Option<f64>,
    pub median_compression: Option<f64>,
    /// Exact values as `numerator/denominator`.
    pub success_rate_exact: String,
    pub mean_compression_exact: Option<String>,
    pub median_compression_exact: Option<String>,
}

fn big(r: Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn exact(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Midpoint median of a non-empty sample.
pub fn median(values: &[BigRational]) -> Option<BigRational> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2].clone()
    } else {
        (&v[n / 2 - 1] + &v[n / 2]) / BigRational::from_integer(BigInt::from(2))
    })
}

pub fn mean(values: &[BigRational]) -> Option<BigRational> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(BigRational::zero(), |acc, v| acc + v);
    Some(sum / BigRational::from_integer(BigInt::from(values.len())))
}

impl GroupStats {
    pub fn of<'a>(rows: impl IntoIterator<Item = &'a ReductionRow>) -> Self {
        let mut attempts = 0u64;
        let mut rhos = Vec::new();
        for r in rows {
            attempts += 1;
            if r.status == ReductionStatus::Success {
                rhos.push(big(r.compression_rate()));
            }
        }
        let successes = rhos.len() as u64;
        let rate = if attempts == 0 {
            BigRational::zero()
        } else {
            BigRational::new(BigInt::from(successes), BigInt::from(attempts))
        };
        let mean = mean(&rhos);
        let median = median(&rhos);
        GroupStats {
            attempts,
            successes,
            success_rate: to_f64(&rate),
            mean_compression: mean.as_ref().map(to_f64),
            median_compression: median.as_ref().map(to_f64),
            success_rate_exact: exact(&rate),
            mean_compression_exact: mean.as_ref().map(exact),
            median_compression_exact: median.as_ref().map(exact),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rows: Vec<ReductionRow>,
    pub by_difficulty: BTreeMap<Difficulty, GroupStats>,
    pub overall: GroupStats,
}

impl ReductionReport {
    /// Compression rates of the successful rows, in row order.
    pub fn distribution(&self) -> Vec<&ReductionRow> {
        self.rows.iter().filter(|r| r.status == ReductionStatus::Success).collect()
    }
}

pub fn reduction_report(rows: Vec<ReductionRow>) -> ReductionReport {
    let by_difficulty = Difficulty::ALL
        .into_iter()
        .filter(|d| rows.iter().any(|r| r.difficulty == *d))
        .map(|d| (d, GroupStats::of(rows.iter().filter(|r| r.difficulty == d))))
        .collect();
    let overall = GroupStats::of(&rows);
    ReductionReport { rows, by_difficulty, overall }
}
