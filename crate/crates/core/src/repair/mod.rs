//! Repair prompts, patch sampling and validation.

mod prompt;
mod validate;

pub use prompt::{
    build_repair_prompt, diff_lines, truncate_lines, truncate_text, FailingCase, PromptStrategy, StrategyKind,
    ELLIPSIS,
};
pub use validate::{validate_patch, ExpectedOutputs, SampleVerdict, Validation};

use std::fs;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Bug, Task};
use crate::llm::{extract_code_block, LlmClient, Message, Purpose};
use crate::oracle::Comparison;
use crate::runner::{RunnerError, ToolchainConfig};
use crate::template::{render, TemplateError};

const FEEDBACK_TEMPLATE: &str = include_str!("../../assets/feedback.md");
const CHAT_SYSTEM: &str = include_str!("../../assets/chat_system.txt");

#[derive(Debug, Error)]
pub enum RepairError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("strategy needs a reduced input but none is available")]
    MissingReduction,
    #[error("strategy needs the original failing case")]
    MissingOriginal,
    #[error("reference solution of {task_id} is unusable: {detail}")]
    ReferenceBroken { task_id: String, detail: String },
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("transcript: {0}")]
    Transcript(#[from] io::Error),
}

impl PartialEq for RepairError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResult {
    /// 1-based.
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_source: Option<String>,
    #[serde(flatten)]
    pub verdict: SampleVerdict,
    pub tests_run: usize,
    /// Assistant calls spent on this sample (more than one only in
    /// conversational mode).
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRun {
    pub task_id: String,
    pub bug_id: String,
    pub strategy: StrategyKind,
    pub samples: Vec<SampleResult>,
    /// 1-based index of the first passing sample.
    pub fixed_at: Option<usize>,
    /// Set when an LLM error stopped sampling early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    pub prompt_bytes: usize,
}

impl RepairRun {
    fn new(task: &Task, bug: &Bug, strategy: StrategyKind, prompt: &str) -> Self {
        RepairRun {
            task_id: task.id.clone(),
            bug_id: bug.id.clone(),
            strategy,
            samples: Vec::new(),
            fixed_at: None,
            aborted: None,
            prompt_bytes: prompt.len(),
        }
    }

    fn push(&mut self, sample: SampleResult) {
        if self.fixed_at.is_none() && sample.verdict.is_pass() {
            self.fixed_at = Some(sample.index);
        }
        self.samples.push(sample);
    }

    /// Pass/fail per sample, in order.
    pub fn outcomes(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.verdict.is_pass()).collect()
    }
}

/// Where prompts, replies and verdicts of one repair run are written.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub dir: PathBuf,
}

impl Transcript {
    fn write(&self, index: usize, ext: &str, body: &str) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.dir.join(format!("sample_{index}.{ext}")), body)
    }

    fn record(&self, index: usize, prompt: &str, reply: &str, result: &SampleResult) -> io::Result<()> {
        self.write(index, "prompt", prompt)?;
        self.write(index, "reply", reply)?;
        let verdict = serde_json::to_string_pretty(result).map_err(io::Error::other)?;
        self.write(index, "verdict", &(verdict + "\n"))
    }
}

/// Everything needed to judge patches for one bug.
#[derive(Debug, Clone)]
pub struct RepairContext<'a> {
    pub task: &'a Task,
    pub bug: &'a Bug,
    pub strategy: PromptStrategy,
    pub prompt: String,
    pub expected: &'a ExpectedOutputs,
    pub toolchain: &'a ToolchainConfig,
    pub comparison: Comparison,
    pub transcript: Option<Transcript>,
}

impl RepairContext<'_> {
    fn llm_context(&self, index: usize) -> String {
        format!("{}/{}/{}/sample_{index}", self.task.id, self.bug.id, self.strategy.kind)
    }

    fn judge_reply(&self, reply: &str) -> Result<(Option<String>, Validation), RunnerError> {
        match extract_code_block(reply) {
            None => Ok((
                None,
                Validation { verdict: SampleVerdict::NoCodeBlock, tests_run: 0, mismatch: None, compile_diagnostics: None },
            )),
            Some(patch) => {
                let v = validate_patch(&patch, self.task, self.expected, self.toolchain, self.comparison)?;
                Ok((Some(patch), v))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    pub samples: usize,
    pub temperature: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { samples: 10, temperature: 0.8 }
    }
}

/// Draw `samples` independent patches and validate each against the full
/// suite. All samples are drawn even after a pass, so pass@k is defined for
/// every k up to N.
pub fn sample_patches(ctx: &RepairContext<'_>, client: &LlmClient, opts: SamplingOptions) -> Result<RepairRun, RepairError> {
    let mut run = RepairRun::new(ctx.task, ctx.bug, ctx.strategy.kind, &ctx.prompt);
    for index in 1..=opts.samples {
        let req = client.request(vec![Message::user(ctx.prompt.clone())], opts.temperature);
        let reply = match client.chat(&req, Purpose::Repair, &ctx.llm_context(index)) {
            Ok(r) => r.content,
            Err(e) => {
                log::warn!("{}: sampling aborted at {index}: {e}", ctx.llm_context(index));
                run.aborted = Some(e.to_string());
                break;
            }
        };
        let (patch_source, v) = ctx.judge_reply(&reply)?;
        let result = SampleResult { index, patch_source, verdict: v.verdict, tests_run: v.tests_run, attempts: 1 };
        if let Some(t) = &ctx.transcript {
            t.record(index, &ctx.prompt, &reply, &result)?;
        }
        run.push(result);
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationOptions {
    /// Feedback rounds after the first reply.
    pub max_retry: usize,
    /// Exchanges (user message plus its reply) kept in each request,
    /// counting the pending one. The system message is always kept.
    pub window: usize,
}

impl Default for ConversationOptions {
    fn default() -> Self {
        ConversationOptions { max_retry: 1, window: 2 }
    }
}

fn feedback_message(v: &Validation, strategy: &PromptStrategy) -> Result<String, TemplateError> {
    let details = match &v.mismatch {
        Some((got, want)) => {
            let lines = diff_lines(got, want, strategy.diff_line_cap).join("\n");
            format!("### Error Summary (diff only)\n{}", truncate_text(&lines, strategy.line_budget))
        }
        None => String::new(),
    };
    let text = render(FEEDBACK_TEMPLATE, &[("verdict", &v.verdict.describe()), ("details", &details)])?;
    // An empty details line leaves a blank line behind.
    Ok(text.replace("\n\n", "\n"))
}

/// System message plus the last `window` exchanges of `history`, whose
/// final element is the pending user message.
fn windowed(history: &[Message], window: usize) -> Vec<Message> {
    let keep = (2 * window.max(1) - 1).min(history.len());
    let mut msgs = vec![Message::system(CHAT_SYSTEM.trim_end())];
    msgs.extend_from_slice(&history[history.len() - keep..]);
    msgs
}

/// `samples` independent chains; each chain gets up to `max_retry`
/// feedback rounds after a failing reply. A chain counts as one sample and
/// passes if any of its replies passes.
pub fn conversational_repair(
    ctx: &RepairContext<'_>,
    client: &LlmClient,
    opts: SamplingOptions,
    conv: ConversationOptions,
) -> Result<RepairRun, RepairError> {
    let mut run = RepairRun::new(ctx.task, ctx.bug, ctx.strategy.kind, &ctx.prompt);
    'chains: for index in 1..=opts.samples {
        let mut history = vec![Message::user(ctx.prompt.clone())];
        let mut log = String::new();
        let mut attempts = 0;
        loop {
            let messages = windowed(&history, conv.window);
            let req = client.request(messages.clone(), opts.temperature);
            let context = format!("{}/turn_{}", ctx.llm_context(index), attempts + 1);
            let reply = match client.chat(&req, Purpose::Repair, &context) {
                Ok(r) => r.content,
                Err(e) => {
                    log::warn!("{context}: sampling aborted: {e}");
                    run.aborted = Some(e.to_string());
                    break 'chains;
                }
            };
            attempts += 1;
            for m in &messages {
                log.push_str(&format!("=== {:?} ===\n{}\n", m.role, m.content));
            }
            let (patch_source, v) = ctx.judge_reply(&reply)?;
            let done = v.verdict.is_pass() || attempts > conv.max_retry;
            if done {
                let result = SampleResult { index, patch_source, verdict: v.verdict, tests_run: v.tests_run, attempts };
                if let Some(t) = &ctx.transcript {
                    t.record(index, &log, &reply, &result)?;
                }
                run.push(result);
                break;
            }
            history.push(Message::assistant(reply));
            history.push(Message::user(feedback_message(&v, &ctx.strategy)?));
        }
    }
    Ok(run)
}
