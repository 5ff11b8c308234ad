use std::fs;

use shrinkfix_core::config::{Engine, RepairMode, RunConfig};
use shrinkfix_core::corpus::{write_corpus, Bug, Difficulty, Payload, Task, TestCase};
use shrinkfix_core::llm::{MockEntry, UsageLedger};
use shrinkfix_core::pipeline::{PipelineError, Selector, Session};
use shrinkfix_core::reducer::ReductionStatus;
use shrinkfix_core::repair::StrategyKind;
use shrinkfix_core::runner::ToolchainConfig;

const REFERENCE: &str = "awk '{s+=$1} END {print s+0}'\n";
const BUGGY: &str = "awk 'NR>1 {s+=p} {p=$1} END {print s+0}'\n";

fn task(id: &str) -> Task {
    let input: String = (1..=40).map(|i| format!("{i}\n")).collect();
    Task {
        id: id.into(),
        difficulty: Difficulty::D,
        statement: "# Sum\n\nPrint the sum of the lines.\n".into(),
        reference_source: REFERENCE.into(),
        tests: vec![
            TestCase { id: "a".into(), input: Payload::inline(&b"2\n3\n"[..]), expected_output: None },
            TestCase { id: "long".into(), input: Payload::inline(input.into_bytes()), expected_output: None },
        ],
        bugs: vec![Bug { id: "b1".into(), buggy_source: BUGGY.into(), failing_input_id: "long".into(), metadata: Default::default() }],
    }
}

fn session(dir: &std::path::Path, mock: &[MockEntry], run_id: &str) -> Session {
    write_corpus(&dir.join("corpus"), &[task("s1"), task("s2")]).unwrap();
    let mock_path = dir.join(format!("{run_id}.mock.json"));
    fs::write(&mock_path, serde_json::to_string(mock).unwrap()).unwrap();
    let mut cfg = RunConfig {
        corpus: dir.join("corpus"),
        output_dir: dir.join("out"),
        run_id: Some(run_id.into()),
        parallelism: 1,
        toolchain: ToolchainConfig::script_mode("sh", dir.join("scratch")),
        ..RunConfig::default()
    };
    cfg.llm.mock_script = Some(mock_path);
    cfg.repair.samples = 2;
    cfg.repair.ks = vec![1, 2];
    Session::open(cfg).unwrap()
}

fn calls(s: &Session) -> usize {
    fs::read_to_string(s.ledger_path()).map(|t| UsageLedger::from_jsonl(&t).unwrap().entries.len()).unwrap_or(0)
}

#[test]
fn pure_llm_reduction_is_judged_and_resumed() {
    let dir = tempfile::tempdir().unwrap();
    let mock = vec![
        MockEntry::new("*", "Try this:\n```\n5\n```\n"),
        MockEntry::new("*", "Try this:\n```\n0\n```\n"),
    ];
    let s = session(dir.path(), &mock, "r");
    let batch = s.reduce(&Selector::all(), Engine::PureLlm, false).unwrap();
    assert!(batch.failures.is_empty(), "{:?}", batch.failures);
    let by_task: Vec<_> = batch.done.iter().map(|r| (r.task_id.as_str(), r.summary.status)).collect();
    assert_eq!(by_task, vec![("s1", ReductionStatus::Success), ("s2", ReductionStatus::ReducerError)]);
    assert_eq!(fs::read(s.run_dir.join("reduced/s2/b1.in")).unwrap().len() as u64, batch.done[1].summary.original_bytes);
    assert_eq!(calls(&s), 2);
    // records on disk are reused; the exhausted mock is never asked again
    let again = s.reduce(&Selector::all(), Engine::PureLlm, false).unwrap();
    assert_eq!(again.done, batch.done);
    assert_eq!(calls(&s), 2);
}

#[test]
fn selectors() {
    let dir = tempfile::tempdir().unwrap();
    let s = session(dir.path(), &[], "sel");
    let one = Selector { tasks: vec![], bugs: vec!["s2/b1".into()] };
    let batch = s.reduce(&one, Engine::Ddmin, false).unwrap();
    assert_eq!(batch.done.len(), 1);
    assert_eq!(batch.done[0].task_id, "s2");
    let none = Selector { tasks: vec!["s1".into()], bugs: vec!["s2/b1".into()] };
    let err = s.reduce(&none, Engine::Ddmin, false).unwrap_err();
    assert!(matches!(err, PipelineError::Usage(ref m) if m.contains("no bugs matched")));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn aborted_repair_is_retried_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let fix = format!("```sh\n{REFERENCE}```\n");
    // one reply for two tasks x two samples: the mock runs dry
    let s = session(dir.path(), &[MockEntry::new("*", fix.clone())], "ab");
    let only_s1 = Selector { tasks: vec!["s1".into()], bugs: vec![] };
    let batch = s.repair(&only_s1, &[StrategyKind::Baseline], RepairMode::Single).unwrap();
    assert_eq!(batch.done.len(), 0);
    assert_eq!(batch.failures.len(), 1);
    let marker = s.run_dir.join("repair/baseline/s1/b1.json");
    assert!(marker.is_file());
    drop(s);
    // same run id, fresh script
    let s = session(dir.path(), &[MockEntry::new("*", fix.clone()), MockEntry::new("*", fix)], "ab");
    let batch = s.repair(&only_s1, &[StrategyKind::Baseline], RepairMode::Single).unwrap();
    assert!(batch.failures.is_empty(), "{:?}", batch.failures);
    assert_eq!(batch.done[0].run.fixed_at, Some(1));
    assert_eq!(batch.done[0].run.samples.len(), 2);
}

#[test]
fn reports_scan_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mock: Vec<MockEntry> = (0..4).map(|_| MockEntry::new("*", format!("```sh\n{REFERENCE}```\n"))).collect();
    let s = session(dir.path(), &mock, "rep");
    s.reduce(&Selector::all(), Engine::Ddmin, false).unwrap();
    s.repair(&Selector::all(), &[StrategyKind::ReducedTest], RepairMode::Single).unwrap();
    let paths = s.write_reports().unwrap();
    assert_eq!(paths.len(), 6);
    let csv = fs::read_to_string(s.run_dir.join("reports/pass_at_k.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains("reduced_test") && l.contains("Overall")));
    let compression = fs::read_to_string(s.run_dir.join("reports/compression.csv")).unwrap();
    assert_eq!(compression.lines().count(), 3, "{compression}");
}
