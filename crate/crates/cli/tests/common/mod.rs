//! Sum-of-integers fixture corpus, run configs and helpers for driving the
//! binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shrinkfix_core::config::RunConfig;
use shrinkfix_core::corpus::{write_corpus, Bug, Difficulty, Payload, Task, TestCase};
use shrinkfix_core::llm::MockEntry;
use shrinkfix_core::runner::ToolchainConfig;

pub const SUM_REFERENCE: &str = "awk '{s+=$1} END {print s+0}'\n";
/// Adds every value except the last one.
pub const SUM_BUGGY: &str = "awk 'NR>1 {s+=p} {p=$1} END {print s+0}'\n";
pub const SUM_STATEMENT: &str = "# Sum of Integers\n\nEach line holds one integer. Print their sum.\n";

/// `lines` random positive integers, one per line.
pub fn number_lines(lines: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..lines {
        out.push_str(&rng.gen_range(1..1000).to_string());
        out.push('\n');
    }
    out.into_bytes()
}

pub fn sum_task(id: &str, failing_lines: usize) -> Task {
    let t = |id: &str, input: Vec<u8>| TestCase { id: id.into(), input: Payload::inline(input), expected_output: None };
    Task {
        id: id.into(),
        difficulty: Difficulty::C,
        statement: SUM_STATEMENT.into(),
        reference_source: SUM_REFERENCE.into(),
        tests: vec![
            t("small", b"1\n2\n3\n".to_vec()),
            t("single", b"7\n".to_vec()),
            t("big", number_lines(failing_lines, 7)),
        ],
        bugs: vec![Bug {
            id: "drop-last".into(),
            buggy_source: SUM_BUGGY.into(),
            failing_input_id: "big".into(),
            metadata: Default::default(),
        }],
    }
}

/// A temporary workspace with a corpus, a mock script and a config file.
pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Workspace {
    pub fn new(tasks: &[Task], mock: &[MockEntry], tweak: impl FnOnce(&mut RunConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write_corpus(&root.join("corpus"), tasks).unwrap();
        std::fs::write(root.join("mock.json"), serde_json::to_string_pretty(mock).unwrap()).unwrap();
        let mut cfg = RunConfig {
            corpus: root.join("corpus"),
            output_dir: root.join("out"),
            run_id: Some("fixture".into()),
            parallelism: 2,
            toolchain: ToolchainConfig::script_mode("sh", root.join("scratch")),
            ..RunConfig::default()
        };
        cfg.llm.mock_script = Some(root.join("mock.json"));
        tweak(&mut cfg);
        let config = root.join("run.toml");
        std::fs::write(&config, cfg.to_toml()).unwrap();
        Workspace { dir, config }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.root().join("out/runs/fixture")
    }

    /// Run the binary with `--config` and `args`.
    pub fn cli(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_shrinkfix"))
            .arg("--config")
            .arg(&self.config)
            .args(args)
            .output()
            .expect("binary runs")
    }
}

pub fn fenced(source: &str) -> String {
    format!("Here is the fix.\n\n```sh\n{source}```\n")
}

/// `n` replies; sample `correct_at` (1-based) is the reference program,
/// the rest repeat the bug.
pub fn repair_script(n: usize, correct_at: Option<usize>) -> Vec<MockEntry> {
    (1..=n)
        .map(|k| {
            let src = if Some(k) == correct_at { SUM_REFERENCE } else { SUM_BUGGY };
            MockEntry::new("*", fenced(src))
        })
        .collect()
}

pub fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

/// The sum task with a statement and buggy program of typical contest
/// length, so fixed template text does not dominate prompt size.
pub fn sum_task_full(id: &str, failing_lines: usize) -> Task {
    let mut t = sum_task(id, failing_lines);
    let mut statement = String::from("# Sum of Integers\n\n## Problem Statement\n\n");
    statement.push_str(
        "You are given a sequence of integers A_1, A_2, ..., A_N written one per line. \
         Compute A_1 + A_2 + ... + A_N and print it. The sequence may be long, so read \
         the input until end of file. Note that N itself is not given; every line of \
         the input holds exactly one element of the sequence.\n\n",
    );
    statement.push_str("## Constraints\n\n");
    for c in [
        "1 <= N <= 2 x 10^5",
        "1 <= A_i <= 10^9",
        "All input values are integers.",
        "The answer fits in a signed 64-bit integer.",
    ] {
        statement.push_str(&format!("- {c}\n"));
    }
    statement.push_str("\n## Input\n\nThe input is given from Standard Input in the following format:\n\n```\nA_1\nA_2\n...\nA_N\n```\n\n");
    statement.push_str("## Output\n\nPrint the sum of all elements on a single line.\n\n");
    for (k, (input, output)) in [("1\n2\n3\n", "6"), ("7\n", "7"), ("100\n200\n300\n400\n", "1000")].iter().enumerate() {
        statement.push_str(&format!(
            "## Sample Input {n}\n\n```\n{input}```\n\n## Sample Output {n}\n\n```\n{output}\n```\n\n",
            n = k + 1
        ));
        statement.push_str("Add every value of the sequence, in the order given, and print the total. \
                            There are no extra spaces or blank lines in the input.\n\n");
    }
    t.statement = statement;
    let mut buggy = String::from("#!/bin/sh\n# Reads one integer per line and prints the running total.\n");
    for i in 0..30 {
        buggy.push_str(&format!("# step {i}: the accumulator keeps the previous value before adding\n"));
    }
    buggy.push_str(SUM_BUGGY);
    t.bugs[0].buggy_source = buggy;
    t
}
