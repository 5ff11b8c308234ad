//! Baseline: ask the model for a shorter failing input directly.

use std::time::Instant;

use super::{settle_external, BugContext, ReductionResult, ReductionStatus};
use crate::llm::{extract_code_block, LlmClient, LlmError, Message, Purpose};
use crate::template::{render, TemplateError};

const TEMPLATE: &str = include_str!("../../assets/pure_llm_reduce.md");

/// The whole original input is embedded, however large.
pub fn build_pure_llm_prompt(ctx: &BugContext<'_>) -> Result<String, TemplateError> {
    let input = String::from_utf8_lossy(ctx.failing_input);
    render(
        TEMPLATE,
        &[
            ("problem_description", ctx.task.statement.trim_end()),
            ("wa_code", ctx.bug.buggy_source.trim_end()),
            ("failing_input", input.trim_end_matches('\n')),
        ],
    )
}

/// One chat call at temperature 0. The first fenced block of the reply is
/// the candidate; it is judged exactly like an external reducer's output.
pub fn pure_llm_reduce(ctx: &BugContext<'_>, client: &LlmClient) -> Result<ReductionResult, LlmError> {
    let start = Instant::now();
    let prompt = build_pure_llm_prompt(ctx).map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
    let req = client.request(vec![Message::user(prompt)], 0.0);
    let context = format!("{}/{}", ctx.task.id, ctx.bug.id);
    let reply = client.chat(&req, Purpose::PureLlmReduce, &context)?;
    let Some(block) = extract_code_block(&reply.content) else {
        return Ok(ReductionResult::fallback(
            ctx.failing_input,
            ReductionStatus::ReducerError,
            start.elapsed().as_secs_f64(),
            0,
            Some("reply contains no fenced block".into()),
        ));
    };
    let mut candidate = block.into_bytes();
    if !candidate.is_empty() && !candidate.ends_with(b"\n") {
        candidate.push(b'\n');
    }
    Ok(settle_external(ctx, candidate, start.elapsed().as_secs_f64(), 1))
}
