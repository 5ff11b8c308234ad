use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{pass_at_k, reduction_report, ReductionReport, ReductionRow, VerdictMatrix};
use crate::corpus::Difficulty;
use crate::llm::CostSummary;
use crate::repair::{RepairRun, StrategyKind};

pub const OVERALL: &str = "Overall";

/// One repair run tagged with what produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub model: String,
    pub difficulty: Difficulty,
    pub run: RepairRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKRow {
    pub model: String,
    pub strategy: StrategyKind,
    pub difficulty: String,
    pub k: usize,
    pub bugs: usize,
    pub fixed: u64,
    pub pass_at_k: f64,
    /// Percentage at one decimal place.
    pub pass_at_k_pct: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLengthRow {
    pub model: String,
    pub strategy: StrategyKind,
    pub difficulty: String,
    pub bugs: usize,
    pub mean_prompt_bytes: f64,
    pub max_prompt_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples_per_bug: usize,
    pub pass_at_k: Vec<PassAtKRow>,
    pub reduction: ReductionReport,
    pub prompt_lengths: Vec<PromptLengthRow>,
    pub cost: CostSummary,
}

pub fn pct(r: Ratio<u64>) -> String {
    format!("{:.1}", *r.numer() as f64 * 100.0 / *r.denom() as f64)
}

fn groups() -> Vec<(String, Option<Difficulty>)> {
    let mut g: Vec<_> = Difficulty::ALL.into_iter().map(|d| (d.to_string(), Some(d))).collect();
    g.push((OVERALL.to_string(), None));
    g
}

/// Aggregate everything a run produced. Rows are ordered by model,
/// strategy, difficulty (C, D, EF, Overall) and k, independently of the
/// order in which bugs finished.
pub fn build_report(
    samples_per_bug: usize,
    ks: &[usize],
    reductions: Vec<ReductionRow>,
    repairs: &[RepairRecord],
    cost: CostSummary,
) -> EvalReport {
    let mut cells: BTreeMap<(String, StrategyKind), Vec<&RepairRecord>> = BTreeMap::new();
    for r in repairs {
        cells.entry((r.model.clone(), r.run.strategy)).or_default().push(r);
    }
    let mut pass_rows = Vec::new();
    let mut prompt_rows = Vec::new();
    for ((model, strategy), mut records) in cells {
        records.sort_by(|a, b| (&a.run.task_id, &a.run.bug_id).cmp(&(&b.run.task_id, &b.run.bug_id)));
        let mut matrix = VerdictMatrix::new(samples_per_bug);
        for r in &records {
            matrix.push(format!("{}/{}", r.run.task_id, r.run.bug_id), r.difficulty, r.run.outcomes());
        }
        for (label, difficulty) in groups() {
            let sub = match difficulty {
                Some(d) => matrix.only(d),
                None => matrix.clone(),
            };
            if sub.rows.is_empty() {
                continue;
            }
            for &k in ks {
                let Ok(p) = pass_at_k(&sub, k) else { continue };
                pass_rows.push(PassAtKRow {
                    model: model.clone(),
                    strategy,
                    difficulty: label.clone(),
                    k,
                    bugs: sub.rows.len(),
                    fixed: *p.numer() * (sub.rows.len() as u64 / *p.denom()),
                    pass_at_k: *p.numer() as f64 / *p.denom() as f64,
                    pass_at_k_pct: pct(p),
                });
            }
            let lens: Vec<usize> = records
                .iter()
                .filter(|r| difficulty.is_none_or(|d| r.difficulty == d))
                .map(|r| r.run.prompt_bytes)
                .collect();
            prompt_rows.push(PromptLengthRow {
                model: model.clone(),
                strategy,
                difficulty: label,
                bugs: lens.len(),
                mean_prompt_bytes: lens.iter().sum::<usize>() as f64 / lens.len() as f64,
                max_prompt_bytes: lens.iter().copied().max().unwrap_or(0),
            });
        }
    }
    let mut reductions = reductions;
    reductions.sort_by(|a, b| (&a.task_id, &a.bug_id).cmp(&(&b.task_id, &b.bug_id)));
    EvalReport {
        samples_per_bug,
        pass_at_k: pass_rows,
        reduction: reduction_report(reductions),
        prompt_lengths: prompt_rows,
        cost,
    }
}

#[derive(Serialize)]
struct CompressionCsv<'a> {
    task_id: &'a str,
    bug_id: &'a str,
    difficulty: Difficulty,
    original_bytes: u64,
    reduced_bytes: u64,
    compression_rate: f64,
    compression_rate_exact: String,
}

#[derive(Serialize)]
struct SummaryCsv<'a> {
    group: &'a str,
    attempts: u64,
    successes: u64,
    success_rate: f64,
    success_rate_pct: String,
    mean_compression: Option<f64>,
    median_compression: Option<f64>,
}

#[derive(Serialize)]
struct LedgerCsv {
    purpose: String,
    calls: u64,
    input_tokens: u64,
    output_tokens: u64,
    cost_usd: String,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()
}

fn pct_f(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// Write `report.json` and the CSV tables into `dir`; returns the paths.
pub fn export_reports(report: &EvalReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let p = |name: &str| dir.join(name);
    let json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    fs::write(p("report.json"), json + "\n")?;
    write_csv(&p("pass_at_k.csv"), &report.pass_at_k)?;
    write_csv(
        &p("compression.csv"),
        report.reduction.distribution().into_iter().map(|r| {
            let rho = r.compression_rate();
            CompressionCsv {
                task_id: &r.task_id,
                bug_id: &r.bug_id,
                difficulty: r.difficulty,
                original_bytes: r.original_bytes,
                reduced_bytes: r.reduced_bytes,
                compression_rate: *rho.numer() as f64 / *rho.denom() as f64,
                compression_rate_exact: format!("{}/{}", rho.numer(), rho.denom()),
            }
        }),
    )?;
    let by_diff: Vec<(String, &super::GroupStats)> = report
        .reduction
        .by_difficulty
        .iter()
        .map(|(d, g)| (d.to_string(), g))
        .chain(std::iter::once((OVERALL.to_string(), &report.reduction.overall)))
        .collect();
    write_csv(
        &p("reduction_summary.csv"),
        by_diff.iter().map(|(group, g)| SummaryCsv {
            group,
            attempts: g.attempts,
            successes: g.successes,
            success_rate: g.success_rate,
            success_rate_pct: pct_f(g.success_rate),
            mean_compression: g.mean_compression,
            median_compression: g.median_compression,
        }),
    )?;
    write_csv(&p("prompt_lengths.csv"), &report.prompt_lengths)?;
    let mut ledger: Vec<LedgerCsv> = report
        .cost
        .by_purpose
        .iter()
        .map(|(purpose, t)| LedgerCsv {
            purpose: purpose.to_string(),
            calls: t.calls,
            input_tokens: t.input_tokens,
            output_tokens: t.output_tokens,
            cost_usd: t.cost_usd.to_string(),
        })
        .collect();
    let t = &report.cost.total;
    ledger.push(LedgerCsv {
        purpose: "Total".into(),
        calls: t.calls,
        input_tokens: t.input_tokens,
        output_tokens: t.output_tokens,
        cost_usd: t.cost_usd.to_string(),
    });
    write_csv(&p("ledger_totals.csv"), ledger)?;
    Ok(["report.json", "pass_at_k.csv", "compression.csv", "reduction_summary.csv", "prompt_lengths.csv", "ledger_totals.csv"]
        .iter()
        .map(|n| p(n))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reducer::ReductionStatus;
    use crate::repair::{SampleResult, SampleVerdict};

    fn record(strategy: StrategyKind, bug: &str, difficulty: Difficulty, pass_at: Option<usize>) -> RepairRecord {
        let samples = (1..=3)
            .map(|i| SampleResult {
                index: i,
                patch_source: None,
                verdict: if Some(i) == pass_at { SampleVerdict::Pass } else { SampleVerdict::NoCodeBlock },
                tests_run: 0,
                attempts: 1,
            })
            .collect();
        RepairRecord {
            model: "m".into(),
            difficulty,
            run: RepairRun {
                task_id: "t".into(),
                bug_id: bug.into(),
                strategy,
                samples,
                fixed_at: pass_at,
                aborted: None,
                prompt_bytes: 100,
            },
        }
    }

    fn row(bug: &str, status: ReductionStatus) -> ReductionRow {
        ReductionRow {
            task_id: "t".into(),
            bug_id: bug.into(),
            difficulty: Difficulty::D,
            status,
            original_bytes: 100,
            reduced_bytes: if status == ReductionStatus::Success { 10 } else { 100 },
            candidates_tried: 3,
        }
    }

    #[test]
    fn csv_rows_and_round_trip() {
        let repairs = vec![
            record(StrategyKind::ReducedTest, "a", Difficulty::C, Some(2)),
            record(StrategyKind::ReducedTest, "b", Difficulty::D, None),
            record(StrategyKind::Baseline, "a", Difficulty::C, None),
            record(StrategyKind::Baseline, "b", Difficulty::D, Some(1)),
        ];
        let reductions = vec![row("a", ReductionStatus::Success), row("b", ReductionStatus::NoShrink)];
        let report = build_report(3, &[1, 2, 3], reductions, &repairs, CostSummary::default());
        // 2 strategies x (C, D, Overall) x 3 k
        assert_eq!(report.pass_at_k.len(), 18);
        let overall_k2 = report
            .pass_at_k
            .iter()
            .find(|r| r.strategy == StrategyKind::ReducedTest && r.difficulty == OVERALL && r.k == 2)
            .unwrap();
        assert_eq!((overall_k2.fixed, overall_k2.pass_at_k_pct.as_str()), (1, "50.0"));

        let dir = tempfile::tempdir().unwrap();
        export_reports(&report, dir.path()).unwrap();
        let json = fs::read_to_string(dir.path().join("report.json")).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let mut rdr = csv::Reader::from_path(dir.path().join("compression.csv")).unwrap();
        assert_eq!(rdr.records().count(), 1);
        let mut rdr = csv::Reader::from_path(dir.path().join("pass_at_k.csv")).unwrap();
        assert_eq!(rdr.records().count(), 18);
        assert_eq!(
            rdr.headers().unwrap().iter().collect::<Vec<_>>(),
            ["model", "strategy", "difficulty", "k", "bugs", "fixed", "pass_at_k", "pass_at_k_pct"]
        );
    }
}
