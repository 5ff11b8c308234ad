use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

/// One scripted reply. `match` is a substring of the request text (all
/// message contents joined by newlines), or `*` for any request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(rename = "match")]
    pub pattern: String,
    pub response: String,
    /// Default: prompt bytes / 4, rounded up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    /// Default: response bytes / 4, rounded up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

impl MockEntry {
    pub fn new(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        MockEntry { pattern: pattern.into(), response: response.into(), input_tokens: None, output_tokens: None }
    }

    pub fn tokens(mut self, input: u64, output: u64) -> Self {
        self.input_tokens = Some(input);
        self.output_tokens = Some(output);
        self
    }
}

/// Replays a script: each request takes the first unconsumed entry whose
/// pattern matches, and consumes it.
#[derive(Debug)]
pub struct MockBackend {
    entries: Vec<MockEntry>,
    consumed: Mutex<Vec<bool>>,
}

impl MockBackend {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        let consumed = Mutex::new(vec![false; entries.len()]);
        MockBackend { entries, consumed }
    }

    /// Load a JSON array of entries.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::NotConfigured(format!("mock script {}: {e}", path.display())))?;
        let entries: Vec<MockEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::NotConfigured(format!("mock script {}: {e}", path.display())))?;
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.consumed.lock().unwrap().iter().filter(|c| !**c).count()
    }
}

fn estimate_tokens(bytes: usize) -> u64 {
    bytes.div_ceil(4) as u64
}

impl ChatBackend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let prompt = req.prompt_text();
        let mut consumed = self.consumed.lock().unwrap();
        let idx = self
            .entries
            .iter()
            .enumerate()
            .position(|(i, e)| !consumed[i] && (e.pattern == "*" || prompt.contains(&e.pattern)))
            .ok_or(LlmError::ScriptExhausted)?;
        consumed[idx] = true;
        let e = &self.entries[idx];
        Ok(ChatResponse {
            content: e.response.clone(),
            input_tokens: e.input_tokens.unwrap_or_else(|| estimate_tokens(prompt.len())),
            output_tokens: e.output_tokens.unwrap_or_else(|| estimate_tokens(e.response.len())),
        })
    }
}
