use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::Difficulty;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub bug: String,
    pub difficulty: Difficulty,
    /// Pass/fail per sample in draw order, exactly `n` long.
    pub outcomes: Vec<bool>,
}

/// Per-bug sample outcomes for one (model, strategy) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictMatrix {
    pub n: usize,
    pub rows: Vec<MatrixRow>,
}

impl VerdictMatrix {
    pub fn new(n: usize) -> Self {
        VerdictMatrix { n, rows: Vec::new() }
    }

    /// Rows shorter than `n` are padded with failures; longer rows are cut.
    pub fn push(&mut self, bug: impl Into<String>, difficulty: Difficulty, mut outcomes: Vec<bool>) {
        outcomes.resize(self.n, false);
        self.rows.push(MatrixRow { bug: bug.into(), difficulty, outcomes });
    }

    pub fn only(&self, difficulty: Difficulty) -> VerdictMatrix {
        VerdictMatrix {
            n: self.n,
            rows: self.rows.iter().filter(|r| r.difficulty == difficulty).cloned().collect(),
        }
    }
}

/// Fraction of bugs with a pass among their first `k` samples.
///
/// ```
/// use shrinkfix_core::corpus::Difficulty;
/// use shrinkfix_core::metrics::{pass_at_k, VerdictMatrix};
/// use num_rational::Ratio;
///
/// let mut m = VerdictMatrix::new(10);
/// let mut third = vec![false; 10];
/// third[2] = true;
/// m.push("b", Difficulty::C, third);
/// assert_eq!(pass_at_k(&m, 1).unwrap(), Ratio::from_integer(0));
/// assert_eq!(pass_at_k(&m, 5).unwrap(), Ratio::from_integer(1));
/// ```
pub fn pass_at_k(matrix: &VerdictMatrix, k: usize) -> Result<Ratio<u64>, MetricsError> {
    if matrix.rows.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    if k == 0 || k > matrix.n {
        return Err(MetricsError::KOutOfRange { k, n: matrix.n });
    }
    let fixed = matrix.rows.iter().filter(|r| r.outcomes.iter().take(k).any(|&b| b)).count();
    Ok(Ratio::new(fixed as u64, matrix.rows.len() as u64))
}
