use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RepairError;
use crate::corpus::{Bug, Task};
use crate::oracle::{normalize_output, DifferentialOracle};
use crate::runner::{RunStatus, RunnerError};
use crate::template::render;

const REPAIR_TEMPLATE: &str = include_str!("../../assets/repair_prompt.md");
const FAILING_CASE_TEMPLATE: &str = include_str!("../../assets/failing_case.md");
const DIFF_LINES_TEMPLATE: &str = include_str!("../../assets/diff_lines_prompt.md");

pub const ELLIPSIS: &str = "...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Statement and buggy code only.
    Baseline,
    /// The unreduced failing input with both outputs.
    OriginTest,
    /// The reduced failing input with both outputs.
    ReducedTest,
    /// Up to `diff_line_cap` mismatching output lines of the original input.
    DiffLines,
    /// Reduced case followed by the original case.
    ReducedPlusOrigin,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Baseline,
        StrategyKind::OriginTest,
        StrategyKind::ReducedTest,
        StrategyKind::DiffLines,
        StrategyKind::ReducedPlusOrigin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::OriginTest => "origin_test",
            StrategyKind::ReducedTest => "reduced_test",
            StrategyKind::DiffLines => "diff_lines",
            StrategyKind::ReducedPlusOrigin => "reduced_plus_origin",
        }
    }

    pub fn needs_reduction(self) -> bool {
        matches!(self, StrategyKind::ReducedTest | StrategyKind::ReducedPlusOrigin)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', '+'], "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || k.as_str().replace('_', "") == norm.replace('_', ""))
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStrategy {
    pub kind: StrategyKind,
    pub line_budget: usize,
    pub diff_line_cap: usize,
}

impl PromptStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        PromptStrategy { kind, line_budget: 100, diff_line_cap: 10 }
    }
}

/// Keep the first ⌈L/2⌉ and last ⌊L/2⌋ lines with a `...` line between
/// them. Inputs of at most `L` lines come back unchanged.
///
/// ```
/// use shrinkfix_core::repair::truncate_lines;
/// let lines: Vec<String> = (1..=10).map(|i| i.to_string()).collect();
/// let lines: Vec<&str> = lines.iter().map(String::as_str).collect();
/// assert_eq!(truncate_lines(&lines, 4), ["1", "2", "...", "9", "10"]);
/// assert_eq!(truncate_lines(&lines[..6], 10), &lines[..6]);
/// ```
pub fn truncate_lines<'a>(lines: &[&'a str], budget: usize) -> Vec<&'a str> {
    let budget = budget.max(2);
    if lines.len() <= budget {
        return lines.to_vec();
    }
    let head = budget.div_ceil(2);
    let tail = budget / 2;
    let mut out = Vec::with_capacity(budget + 1);
    out.extend_from_slice(&lines[..head]);
    out.push(ELLIPSIS);
    out.extend_from_slice(&lines[lines.len() - tail..]);
    out
}

/// [`truncate_lines`] over text, split on `\n`. A trailing newline does not
/// count as an extra empty line.
pub fn truncate_text(text: &str, budget: usize) -> String {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return String::new();
    }
    let lines: Vec<&str> = body.split('\n').collect();
    truncate_lines(&lines, budget).join("\n")
}

/// A failing input together with what both programs printed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct FailingCase {
    pub input: Vec<u8>,
    pub wa_output: Vec<u8>,
    pub wa_status: RunStatus,
    pub expected_output: Vec<u8>,
}

impl FailingCase {
    pub fn observe(input: Vec<u8>, oracle: &DifferentialOracle) -> Result<Self, RunnerError> {
        let verdict = oracle.judge(&input)?;
        let buggy = verdict.buggy_outcome.expect("judged without fast path");
        Ok(FailingCase {
            input,
            wa_output: buggy.stdout,
            wa_status: buggy.status,
            expected_output: verdict.ref_outcome.stdout,
        })
    }
}

fn status_note(status: RunStatus) -> Option<String> {
    match status {
        RunStatus::Ok => None,
        RunStatus::NonZeroExit(c) => Some(format!("[runtime error: exit status {c}]")),
        RunStatus::Timeout => Some("[time limit exceeded]".into()),
        RunStatus::OutputTruncated => Some("[output limit exceeded]".into()),
    }
}

fn failing_case_block(case: &FailingCase, label: &str, budget: usize) -> Result<String, RepairError> {
    let input = truncate_text(&String::from_utf8_lossy(&case.input), budget);
    let mut wa = truncate_text(&normalize_output(&case.wa_output), budget);
    if let Some(note) = status_note(case.wa_status) {
        if !wa.is_empty() {
            wa.push('\n');
        }
        wa.push_str(&note);
    }
    let expected = truncate_text(&normalize_output(&case.expected_output), budget);
    Ok(render(
        FAILING_CASE_TEMPLATE,
        &[
            ("case_label", label),
            ("reduced_failing_input", &input),
            ("wa_output", &wa),
            ("expected_output", &expected),
        ],
    )?)
}

/// `Line k: Got '<a>', Expected '<b>'` for the first `cap` differing lines
/// of the normalized outputs; a missing line reads as empty.
pub fn diff_lines(got: &[u8], expected: &[u8], cap: usize) -> Vec<String> {
    let got = normalize_output(got);
    let expected = normalize_output(expected);
    let g: Vec<&str> = if got.is_empty() { vec![] } else { got.split('\n').collect() };
    let e: Vec<&str> = if expected.is_empty() { vec![] } else { expected.split('\n').collect() };
    (0..g.len().max(e.len()))
        .filter_map(|i| {
            let a = g.get(i).copied().unwrap_or("");
            let b = e.get(i).copied().unwrap_or("");
            (a != b).then(|| format!("Line {}: Got '{a}', Expected '{b}'", i + 1))
        })
        .take(cap)
        .collect()
}

fn diff_summary(case: &FailingCase, cap: usize) -> String {
    let mut lines = diff_lines(&case.wa_output, &case.expected_output, cap);
    if let Some(note) = status_note(case.wa_status) {
        lines.push(note);
    }
    lines.join("\n")
}

/// Build the repair prompt for `strategy`. `reduced` is the case on the
/// reduced input and `original` the case on the original failing input;
/// each is required only by the strategies that show it.
pub fn build_repair_prompt(
    task: &Task,
    bug: &Bug,
    strategy: &PromptStrategy,
    reduced: Option<&FailingCase>,
    original: Option<&FailingCase>,
) -> Result<String, RepairError> {
    let budget = strategy.line_budget;
    let need_reduced = || reduced.ok_or(RepairError::MissingReduction);
    let need_original = || original.ok_or(RepairError::MissingOriginal);
    let statement = task.statement.trim_end();
    let code = bug.buggy_source.trim_end();
    if strategy.kind == StrategyKind::DiffLines {
        let summary = diff_summary(need_original()?, strategy.diff_line_cap);
        return Ok(render(
            DIFF_LINES_TEMPLATE,
            &[("problem_description", statement), ("wa_code", code), ("diff_lines", &summary)],
        )?);
    }
    let failing_case = match strategy.kind {
        StrategyKind::Baseline => String::new(),
        StrategyKind::OriginTest => failing_case_block(need_original()?, "", budget)?,
        StrategyKind::ReducedTest => failing_case_block(need_reduced()?, "", budget)?,
        StrategyKind::ReducedPlusOrigin => {
            failing_case_block(need_reduced()?, " (Reduced)", budget)?
                + &failing_case_block(need_original()?, " (Original)", budget)?
        }
        StrategyKind::DiffLines => unreachable!(),
    };
    Ok(render(
        REPAIR_TEMPLATE,
        &[("problem_description", statement), ("wa_code", code), ("failing_case", &failing_case)],
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Difficulty;
    use proptest::prelude::*;

    fn nums(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn truncation_examples() {
        let ten = nums(10);
        let ten: Vec<&str> = ten.iter().map(String::as_str).collect();
        assert_eq!(truncate_lines(&ten, 4), ["1", "2", "...", "9", "10"]);
        assert_eq!(truncate_lines(&ten[..9], 5), ["1", "2", "3", "...", "8", "9"]);
        assert_eq!(truncate_lines(&ten[..6], 10), &ten[..6]);
        assert_eq!(truncate_text("a\nb\nc\nd\ne\n", 2), "a\n...\ne");
        assert_eq!(truncate_text("", 4), "");
    }

    proptest! {
        #[test]
        fn truncation_properties(lines in prop::collection::vec("[a-z]{0,3}", 0..40), budget in 2usize..30) {
            let lines: Vec<&str> = lines.iter().map(String::as_str).collect();
            let out = truncate_lines(&lines, budget);
            prop_assert!(out.len() <= budget + 1);
            if lines.len() <= budget {
                prop_assert_eq!(&out, &lines);
            } else {
                let head = budget.div_ceil(2);
                prop_assert_eq!(&out[..head], &lines[..head]);
                prop_assert_eq!(out[head], ELLIPSIS);
                prop_assert_eq!(&out[head + 1..], &lines[lines.len() - budget / 2..]);
            }
        }
    }

    fn fixture() -> (Task, Bug) {
        let bug = Bug {
            id: "b0".into(),
            buggy_source: "int main() { return 1; }\n".into(),
            failing_input_id: "0".into(),
            metadata: Default::default(),
        };
        let task = Task {
            id: "t".into(),
            difficulty: Difficulty::D,
            statement: "# Title\nCompute things.\n".into(),
            reference_source: String::new(),
            tests: vec![],
            bugs: vec![bug.clone()],
        };
        (task, bug)
    }

    fn case(input: &str, got: &str, want: &str) -> FailingCase {
        FailingCase {
            input: input.into(),
            wa_output: got.into(),
            wa_status: RunStatus::Ok,
            expected_output: want.into(),
        }
    }

    #[test]
    fn baseline_has_no_failing_case() {
        let (task, bug) = fixture();
        let p = build_repair_prompt(&task, &bug, &PromptStrategy::new(StrategyKind::Baseline), None, None).unwrap();
        assert!(p.starts_with("### Problem Description\n# Title\nCompute things.\n### Your Incorrect Code\n```cpp\nint main() { return 1; }\n```\n### Your Task\n"));
        assert!(!p.contains("Failing Case"));
        assert!(p.ends_with("Provide ONLY the complete fixed C++ program inside a single cpp block.\n"));
    }

    #[test]
    fn reduced_and_origin_blocks() {
        let (task, bug) = fixture();
        let reduced = case("1\n", "0\n", "1\n");
        let original = case("1\n2\n3\n", "0\n", "6\n");
        let s = PromptStrategy::new(StrategyKind::ReducedTest);
        let p = build_repair_prompt(&task, &bug, &s, Some(&reduced), Some(&original)).unwrap();
        assert!(p.contains("### Failing Case\nInput:\n```\n1\n```\nYour Output:\n```\n0\n```\nExpected Output:\n```\n1\n```\n### Your Task"));
        assert!(!p.contains("1\n2\n3"));
        let s = PromptStrategy::new(StrategyKind::OriginTest);
        let p = build_repair_prompt(&task, &bug, &s, Some(&reduced), Some(&original)).unwrap();
        assert!(p.contains("Input:\n```\n1\n2\n3\n```"));
        let s = PromptStrategy::new(StrategyKind::ReducedPlusOrigin);
        let p = build_repair_prompt(&task, &bug, &s, Some(&reduced), Some(&original)).unwrap();
        let r = p.find("### Failing Case (Reduced)").unwrap();
        let o = p.find("### Failing Case (Original)").unwrap();
        assert!(r < o);
        assert_eq!(
            build_repair_prompt(&task, &bug, &s, None, Some(&original)).unwrap_err(),
            RepairError::MissingReduction
        );
    }

    #[test]
    fn truncation_applies_to_each_block() {
        let (task, bug) = fixture();
        let big: String = (1..=500).map(|i| format!("{i}\n")).collect();
        let c = case(&big, &big, &big);
        let mut s = PromptStrategy::new(StrategyKind::OriginTest);
        s.line_budget = 4;
        let p = build_repair_prompt(&task, &bug, &s, None, Some(&c)).unwrap();
        assert_eq!(p.matches("```\n1\n2\n...\n499\n500\n```").count(), 3);
    }

    #[test]
    fn diff_lines_capped() {
        let (task, bug) = fixture();
        let got: String = (0..12).map(|i| format!("{i}\n")).collect();
        let want: String = (0..12).map(|i| format!("{}\n", i + 100)).collect();
        let c = case("x\n", &got, &want);
        let s = PromptStrategy::new(StrategyKind::DiffLines);
        let p = build_repair_prompt(&task, &bug, &s, None, Some(&c)).unwrap();
        assert_eq!(p.matches("\nLine ").count(), 10);
        assert!(p.contains("### Error Summary (diff only)\nLine 1: Got '0', Expected '100'\n"));
        assert!(p.contains("Line 10: Got '9', Expected '109'\n### Your Task\n"));
        assert!(p.ends_with("Return only the complete corrected C++ program in a ```cpp block.\n"));
        assert_eq!(diff_lines(b"1\n2\n", b"1\n", 10), vec!["Line 2: Got '2', Expected ''"]);
        assert!(diff_lines(b"1 \n\n", b"1", 10).is_empty());
    }

    #[test]
    fn crashing_output_is_annotated() {
        let (task, bug) = fixture();
        let mut c = case("1\n", "", "1\n");
        c.wa_status = RunStatus::Timeout;
        let p = build_repair_prompt(&task, &bug, &PromptStrategy::new(StrategyKind::ReducedTest), Some(&c), None).unwrap();
        assert!(p.contains("Your Output:\n```\n[time limit exceeded]\n```"));
    }

    #[test]
    fn strategy_names() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert_eq!("ReducedPlusOrigin".parse::<StrategyKind>().unwrap(), StrategyKind::ReducedPlusOrigin);
        assert_eq!("diff-lines".parse::<StrategyKind>().unwrap(), StrategyKind::DiffLines);
    }
}
