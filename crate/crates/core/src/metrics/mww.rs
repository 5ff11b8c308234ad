use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::MetricsError;

/// Pooled sizes up to this use the exact permutation distribution.
pub const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MwwMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwwResult {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: MwwMethod,
}

/// Twice the midrank of every pooled value (so ranks stay integral), and
/// the tie-group sizes.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, midrank (i+j+2)/2
        for &idx in &order[i..=j] {
            ranks[idx] = (i + j + 2) as u64;
        }
        ties.push((j - i + 1) as u64);
        i = j + 1;
    }
    (ranks, ties)
}

struct Prepared {
    n: usize,
    m: usize,
    ranks: Vec<u64>,
    ties: Vec<u64>,
    /// 2·U of the first sample.
    u2: i64,
}

fn prepare(a: &[f64], b: &[f64]) -> Result<Prepared, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(MetricsError::EmptySample);
    }
    if pooled.iter().all(|v| *v == pooled[0]) {
        return Err(MetricsError::DegenerateSamples);
    }
    let (ranks, ties) = doubled_midranks(&pooled);
    let n = a.len();
    let r2: u64 = ranks[..n].iter().sum();
    let u2 = r2 as i64 - (n * (n + 1)) as i64;
    Ok(Prepared { n, m: b.len(), ranks, ties, u2 })
}

/// Exact two-sided p: share of all C(n+m, n) relabelings whose U is at
/// least as far from its mean as the observed one.
pub fn mww_exact_p(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    let p = prepare(a, b)?;
    Ok(exact_p(&p))
}

fn exact_p(p: &Prepared) -> f64 {
    let total = p.n + p.m;
    let center2 = (p.n * p.m) as i64; // 2 · nm/2
    let observed = (p.u2 - center2).abs();
    let base = (p.n * (p.n + 1)) as i64;
    let (mut extreme, mut count) = (0u64, 0u64);
    // Enumerate n-subsets of the pooled indices.
    let mut idx: Vec<usize> = (0..p.n).collect();
    loop {
        let r2: u64 = idx.iter().map(|&i| p.ranks[i]).sum();
        let dev = (r2 as i64 - base - center2).abs();
        count += 1;
        if dev >= observed {
            extreme += 1;
        }
        // next combination
        let mut i = p.n;
        loop {
            if i == 0 {
                return extreme as f64 / count as f64;
            }
            i -= 1;
            if idx[i] != i + total - p.n {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..p.n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn mww_normal_p(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    let p = prepare(a, b)?;
    Ok(normal_p(&p))
}

fn normal_p(p: &Prepared) -> f64 {
    let (n, m) = (p.n as f64, p.m as f64);
    let total = n + m;
    let tie_term: f64 = p.ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = n * m / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    let dev = (p.u2 as f64 / 2.0 - n * m / 2.0).abs();
    let z = (dev - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided Mann–Whitney U test with midranks for ties.
///
/// ```
/// use shrinkfix_core::metrics::{mww_test, MwwMethod};
/// let r = mww_test(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
/// assert_eq!(r.u, 0.0);
/// assert!((r.p_two_sided - 2.0 / 6.0).abs() < 1e-12);
/// assert_eq!(r.method, MwwMethod::Exact);
/// ```
pub fn mww_test(a: &[f64], b: &[f64]) -> Result<MwwResult, MetricsError> {
    let p = prepare(a, b)?;
    let (p_two_sided, method) = if p.n + p.m <= EXACT_LIMIT {
        (exact_p(&p), MwwMethod::Exact)
    } else {
        (normal_p(&p), MwwMethod::Normal)
    };
    Ok(MwwResult { u: p.u2 as f64 / 2.0, p_two_sided, method })
}
