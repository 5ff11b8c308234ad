//! Running a reducer script as an opaque external program.
//!
//! The script sees the environment below, reads the original input from
//! `RF_INPUT`, and writes its best candidate to `RF_OUTPUT` (it may rewrite
//! that file as often as it likes). Whatever it leaves behind is judged again
//! by the harness before it is trusted.

use std::fs::{self, File};
use std::process::Stdio;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{settle_external, BugContext, ReductionResult, ReductionStatus};
use crate::process::{self, shell_quote, Exit, Invocation, Sink};
use crate::reducergen::ReducerScript;

pub const ENV_REF_CMD: &str = "RF_REF_CMD";
pub const ENV_BUGGY_CMD: &str = "RF_BUGGY_CMD";
pub const ENV_INPUT: &str = "RF_INPUT";
pub const ENV_OUTPUT: &str = "RF_OUTPUT";
pub const ENV_BUDGET_SECS: &str = "RF_BUDGET_SECS";
pub const ENV_RUN_TIMEOUT_SECS: &str = "RF_RUN_TIMEOUT_SECS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalReducerConfig {
    /// Command prefix; the script path is appended.
    pub interpreter: String,
    pub budget: Duration,
    /// On timeout, use the script's last checkpoint if it verifies.
    pub keep_best_on_timeout: bool,
}

impl Default for ExternalReducerConfig {
    fn default() -> Self {
        ExternalReducerConfig {
            interpreter: "python3".into(),
            budget: Duration::from_secs(60),
            keep_best_on_timeout: false,
        }
    }
}

/// Run `script` against the bug in `ctx`. `candidates_tried` in the result
/// counts the harness's own verification runs, not the script's.
pub fn run_external_reducer(
    script: &ReducerScript,
    ctx: &BugContext<'_>,
    cfg: &ExternalReducerConfig,
) -> ReductionResult {
    let start = Instant::now();
    let i0 = ctx.failing_input;
    let fail = |detail: String| {
        ReductionResult::fallback(i0, ReductionStatus::ReducerError, start.elapsed().as_secs_f64(), 0, Some(detail))
    };
    if !script.validated {
        return fail("reducer script has not passed the static check".into());
    }
    let toolchain = &ctx.oracle.toolchain;
    let root = toolchain.scratch_root.join("reduce");
    let dir = match fs::create_dir_all(&root).and_then(|_| tempfile::Builder::new().prefix("ext-").tempdir_in(&root)) {
        Ok(d) => d,
        Err(e) => return fail(format!("scratch dir: {e}")),
    };
    let script_path = dir.path().join("reducer_script");
    let input_path = dir.path().join("input");
    let output_path = dir.path().join("output");
    let log = |name: &str| File::create(dir.path().join(name));
    let (stdout, stderr) = match (
        fs::write(&script_path, &script.source),
        fs::write(&input_path, i0),
        log("stdout.log"),
        log("stderr.log"),
    ) {
        (Ok(()), Ok(()), Ok(o), Ok(e)) => (o, e),
        _ => return fail("could not stage reducer files".into()),
    };

    let path_str = |p: &std::path::Path| p.to_string_lossy().into_owned();
    let env = vec![
        (ENV_REF_CMD.to_string(), ctx.oracle.reference.shell_command()),
        (ENV_BUGGY_CMD.to_string(), ctx.oracle.buggy.shell_command()),
        (ENV_INPUT.to_string(), path_str(&input_path)),
        (ENV_OUTPUT.to_string(), path_str(&output_path)),
        (ENV_BUDGET_SECS.to_string(), cfg.budget.as_secs_f64().to_string()),
        (ENV_RUN_TIMEOUT_SECS.to_string(), toolchain.run_timeout_secs.to_string()),
    ];
    let shell = format!("{} {}", cfg.interpreter, shell_quote(&path_str(&script_path)));
    let finished = process::run(Invocation {
        shell: &shell,
        cwd: dir.path(),
        env,
        stdin: Stdio::null(),
        sink: Sink::Redirect { stdout: stdout.into(), stderr: stderr.into() },
        timeout: cfg.budget,
    });
    let finished = match finished {
        Ok(f) => f,
        Err(e) => return fail(format!("could not start reducer: {e}")),
    };
    let wall = || start.elapsed().as_secs_f64();
    let stderr_tail = || {
        let text = fs::read_to_string(dir.path().join("stderr.log")).unwrap_or_default();
        let lines: Vec<&str> = text.lines().collect();
        lines[lines.len().saturating_sub(5)..].join("\n")
    };

    match finished.exit {
        Exit::Code(0) => match fs::read(&output_path) {
            Ok(candidate) => settle_external(ctx, candidate, wall(), 1),
            Err(_) => fail(format!("reducer exited 0 without writing {ENV_OUTPUT}")),
        },
        Exit::TimedOut => {
            let detail = Some(format!("reducer exceeded {:?} budget", cfg.budget));
            if cfg.keep_best_on_timeout {
                if let Ok(candidate) = fs::read(&output_path) {
                    let settled = settle_external(ctx, candidate, wall(), 1);
                    if settled.status == ReductionStatus::Success {
                        return ReductionResult { status: ReductionStatus::TimedOut, detail, ..settled };
                    }
                }
            }
            ReductionResult::fallback(i0, ReductionStatus::TimedOut, wall(), 0, detail)
        }
        Exit::Code(c) => fail(format!("reducer exited with status {c}: {}", stderr_tail())),
        Exit::Signal(s) => fail(format!("reducer killed by signal {s}: {}", stderr_tail())),
        Exit::OutputOverflow => fail("reducer output overflow".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Bug, Difficulty, Payload, Task, TestCase};
    use crate::oracle::{DifferentialOracle, JudgeOptions};
    use crate::reducergen::ScriptOrigin;
    use crate::runner::{compile, ToolchainConfig};
    use crate::hash::Fingerprint;

    // Reference prints the sum of all lines; the buggy one ignores a line "7".
    const REF: &str = "awk '{s+=$1} END {print s+0}'\n";
    const BUGGY: &str = "awk '$1 != 7 {s+=$1} END {print s+0}'\n";

    struct Fixture {
        _scratch: tempfile::TempDir,
        task: Task,
        oracle: DifferentialOracle,
    }

    fn fixture() -> Fixture {
        let scratch = tempfile::tempdir().unwrap();
        let toolchain = ToolchainConfig::script_mode("sh", scratch.path());
        let oracle = DifferentialOracle {
            reference: compile(REF, &toolchain).unwrap(),
            buggy: compile(BUGGY, &toolchain).unwrap(),
            toolchain,
            options: JudgeOptions::default(),
        };
        let task = Task {
            id: "t".into(),
            difficulty: Difficulty::C,
            statement: "# Sum\n".into(),
            reference_source: REF.into(),
            tests: vec![TestCase { id: "0".into(), input: Payload::inline(&b"1\n7\n3\n"[..]), expected_output: None }],
            bugs: vec![Bug { id: "b".into(), buggy_source: BUGGY.into(), failing_input_id: "0".into(), metadata: Default::default() }],
        };
        Fixture { _scratch: scratch, task, oracle }
    }

    fn script(source: &str) -> ReducerScript {
        ReducerScript {
            source: source.into(),
            origin: ScriptOrigin::UserProvided,
            prompt_fingerprint: Fingerprint::of(b""),
            validated: true,
        }
    }

    fn run(f: &Fixture, source: &str, cfg: &ExternalReducerConfig) -> ReductionResult {
        let ctx = BugContext { task: &f.task, bug: &f.task.bugs[0], oracle: &f.oracle, failing_input: b"1\n7\n3\n" };
        run_external_reducer(&script(source), &ctx, cfg)
    }

    fn sh() -> ExternalReducerConfig {
        ExternalReducerConfig { interpreter: "sh".into(), budget: Duration::from_secs(20), keep_best_on_timeout: false }
    }

    #[test]
    fn copy_is_no_shrink() {
        let f = fixture();
        let r = run(&f, "cp \"$RF_INPUT\" \"$RF_OUTPUT\"\n", &sh());
        assert_eq!(r.status, ReductionStatus::NoShrink);
        assert_eq!(r.reduced_input, b"1\n7\n3\n");
    }

    #[test]
    fn smaller_failing_input_succeeds() {
        let f = fixture();
        let r = run(&f, "printf '7\\n' > \"$RF_OUTPUT\"\n", &sh());
        assert_eq!(r.status, ReductionStatus::Success);
        assert_eq!(r.reduced_input, b"7\n");
        assert!(r.compression_rate() > num_rational::Ratio::from_integer(0));
    }

    #[test]
    fn smaller_passing_input_rolls_back() {
        let f = fixture();
        let r = run(&f, "printf '1\\n' > \"$RF_OUTPUT\"\n", &sh());
        assert_eq!(r.status, ReductionStatus::ReducerError);
        assert_eq!(r.reduced_input, b"1\n7\n3\n");
    }

    #[test]
    fn environment_is_provided() {
        let f = fixture();
        let body = "test -n \"$RF_REF_CMD\" && test -n \"$RF_BUGGY_CMD\" && test \"$RF_BUDGET_SECS\" = 20 \
                    && test \"$RF_RUN_TIMEOUT_SECS\" = 5 && printf '7\\n' | sh -c \"$RF_BUGGY_CMD\" | grep -qx 0 \
                    && printf '7\\n' > \"$RF_OUTPUT\"\n";
        assert_eq!(run(&f, body, &sh()).status, ReductionStatus::Success);
    }

    #[test]
    fn crashes_and_missing_output() {
        let f = fixture();
        let r = run(&f, "echo boom >&2; exit 3\n", &sh());
        assert_eq!(r.status, ReductionStatus::ReducerError);
        assert!(r.detail.unwrap().contains("boom"));
        assert_eq!(run(&f, "exit 0\n", &sh()).status, ReductionStatus::ReducerError);
        let mut unchecked = script("exit 0\n");
        unchecked.validated = false;
        let ctx = BugContext { task: &f.task, bug: &f.task.bugs[0], oracle: &f.oracle, failing_input: b"1\n7\n3\n" };
        assert_eq!(run_external_reducer(&unchecked, &ctx, &sh()).status, ReductionStatus::ReducerError);
    }

    #[test]
    fn timeout_fallback_and_keep_best() {
        let f = fixture();
        let body = "printf '7\\n' > \"$RF_OUTPUT\"; sleep 30\n";
        let mut cfg = ExternalReducerConfig { budget: Duration::from_millis(500), ..sh() };
        let r = run(&f, body, &cfg);
        assert_eq!(r.status, ReductionStatus::TimedOut);
        assert_eq!(r.reduced_input, b"1\n7\n3\n");
        assert!(r.wall_time_secs < 10.0);
        cfg.keep_best_on_timeout = true;
        let r = run(&f, body, &cfg);
        assert_eq!(r.status, ReductionStatus::TimedOut);
        assert_eq!(r.reduced_input, b"7\n");
    }
}
