use serde::{Deserialize, Serialize};

use super::RepairError;
use crate::corpus::Task;
use crate::oracle::Comparison;
use crate::runner::{compile, execute_payload, CompiledProgram, RunStatus, RunnerError, ToolchainConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SampleVerdict {
    Pass,
    CompileError,
    WrongAnswer { test_id: String },
    Timeout { test_id: String },
    RuntimeError { test_id: String },
    NoCodeBlock,
}

impl SampleVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, SampleVerdict::Pass)
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match self {
            SampleVerdict::Pass => "accepted".into(),
            SampleVerdict::CompileError => "compilation error".into(),
            SampleVerdict::WrongAnswer { test_id } => format!("wrong answer on test {test_id}"),
            SampleVerdict::Timeout { test_id } => format!("time limit exceeded on test {test_id}"),
            SampleVerdict::RuntimeError { test_id } => format!("runtime error on test {test_id}"),
            SampleVerdict::NoCodeBlock => "no code block in the reply".into(),
        }
    }
}

/// Expected stdout for every test of a task, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedOutputs {
    pub outputs: Vec<Vec<u8>>,
}

impl ExpectedOutputs {
    /// Use the stored expected output where the corpus has one, otherwise
    /// run the reference program.
    pub fn for_task(task: &Task, cfg: &ToolchainConfig) -> Result<Self, RepairError> {
        let mut reference: Option<CompiledProgram> = None;
        let mut outputs = Vec::with_capacity(task.tests.len());
        for test in &task.tests {
            if let Some(p) = &test.expected_output {
                outputs.push(p.read().map_err(RunnerError::from)?.into_owned());
                continue;
            }
            if reference.is_none() {
                reference = Some(compile(&task.reference_source, cfg).map_err(|e| RepairError::ReferenceBroken {
                    task_id: task.id.clone(),
                    detail: format!("compile: {:?}: {}", e.kind, e.diagnostics),
                })?);
            }
            let out = execute_payload(reference.as_ref().unwrap(), &test.input, cfg)?;
            if !out.is_ok() {
                return Err(RepairError::ReferenceBroken {
                    task_id: task.id.clone(),
                    detail: format!("test {}: {:?}", test.id, out.status),
                });
            }
            outputs.push(out.stdout);
        }
        Ok(ExpectedOutputs { outputs })
    }
}

/// Outcome of validating one patch, plus the evidence needed for feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub verdict: SampleVerdict,
    pub tests_run: usize,
    /// Patch output and expected output on the first failing test.
    pub mismatch: Option<(Vec<u8>, Vec<u8>)>,
    pub compile_diagnostics: Option<String>,
}

/// Compile `patch` and run it on every test in manifest order, stopping
/// at the first failure.
pub fn validate_patch(
    patch: &str,
    task: &Task,
    expected: &ExpectedOutputs,
    cfg: &ToolchainConfig,
    comparison: Comparison,
) -> Result<Validation, RunnerError> {
    let prog = match compile(patch, cfg) {
        Ok(p) => p,
        Err(e) => {
            return Ok(Validation {
                verdict: SampleVerdict::CompileError,
                tests_run: 0,
                mismatch: None,
                compile_diagnostics: Some(e.diagnostics),
            })
        }
    };
    for (i, (test, want)) in task.tests.iter().zip(&expected.outputs).enumerate() {
        let out = execute_payload(&prog, &test.input, cfg)?;
        let test_id = test.id.clone();
        let verdict = match out.status {
            RunStatus::Ok if comparison.same(&out.stdout, want) => continue,
            RunStatus::Ok => SampleVerdict::WrongAnswer { test_id },
            RunStatus::Timeout => SampleVerdict::Timeout { test_id },
            RunStatus::NonZeroExit(_) | RunStatus::OutputTruncated => SampleVerdict::RuntimeError { test_id },
        };
        let mismatch = matches!(verdict, SampleVerdict::WrongAnswer { .. }).then(|| (out.stdout, want.clone()));
        return Ok(Validation { verdict, tests_run: i + 1, mismatch, compile_diagnostics: None });
    }
    Ok(Validation { verdict: SampleVerdict::Pass, tests_run: task.tests.len(), mismatch: None, compile_diagnostics: None })
}
