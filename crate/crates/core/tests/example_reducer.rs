//! The shipped one-shot example reducer, run through the external-reducer
//! protocol on its own task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shrinkfix_core::corpus::{Bug, Difficulty, Payload, Task, TestCase};
use shrinkfix_core::oracle::{DifferentialOracle, JudgeOptions};
use shrinkfix_core::reducer::{run_external_reducer, BugContext, ExternalReducerConfig, ReductionStatus};
use shrinkfix_core::reducergen::{OneShotExample, ReducerScript};
use shrinkfix_core::runner::{compile, ToolchainConfig};

const REFERENCE: &str = "awk 'NR==2 {m=$1; for (i=2; i<=NF; i++) if ($i>m) m=$i; print m}'\n";
/// Starts the running maximum at 0, so all-negative sequences print 0.
const BUGGY: &str = "awk 'NR==2 {m=0; for (i=1; i<=NF; i++) if ($i>m) m=$i; print m}'\n";

fn max_task(values: &[i64]) -> Task {
    let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    let input = format!("{}\n{}\n", values.len(), line.join(" "));
    let example = OneShotExample::builtin();
    Task {
        id: example.example_problem_id.clone(),
        difficulty: Difficulty::C,
        statement: example.example_statement.clone(),
        reference_source: REFERENCE.into(),
        tests: vec![TestCase { id: "neg".into(), input: Payload::inline(input.into_bytes()), expected_output: None }],
        bugs: vec![Bug { id: "zero-init".into(), buggy_source: BUGGY.into(), failing_input_id: "neg".into(), metadata: Default::default() }],
    }
}

#[test]
fn example_reducer_shrinks_to_one_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let values: Vec<i64> = (0..400).map(|_| -rng.gen_range(1..1_000_000)).collect();
    let task = max_task(&values);
    let dir = tempfile::tempdir().unwrap();
    let tc = ToolchainConfig::script_mode("sh", dir.path());
    let oracle = DifferentialOracle {
        reference: compile(REFERENCE, &tc).unwrap(),
        buggy: compile(BUGGY, &tc).unwrap(),
        toolchain: tc,
        options: JudgeOptions::default(),
    };
    let i0 = task.tests[0].input.read().unwrap().into_owned();
    let script = ReducerScript::user_provided(OneShotExample::builtin().example_reducer_source, None).unwrap();
    let ctx = BugContext { task: &task, bug: &task.bugs[0], oracle: &oracle, failing_input: &i0 };
    let r = run_external_reducer(&script, &ctx, &ExternalReducerConfig::default());
    assert_eq!(r.status, ReductionStatus::Success, "{:?}", r.detail);
    assert_eq!(r.reduced_input, b"1\n-1\n");
    assert!(oracle.is_interesting(&r.reduced_input).unwrap());
}
