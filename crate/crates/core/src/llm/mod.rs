//! Chat-completion clients: a live OpenAI-compatible HTTP backend and a
//! deterministic scripted mock, both wrapped by [`LlmClient`], which caps
//! concurrent calls and records every call in a [`UsageLedger`].

mod http;
mod ledger;
mod mock;

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use ledger::{cost, CostSummary, LedgerEntry, Price, PricingTable, PurposeTotals, UsageLedger};
pub use mock::{MockBackend, MockEntry};

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>, temperature: f64) -> Self {
        ChatRequest { model: model.into(), messages, temperature, max_tokens: None }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidRequest(m.into()));
        if self.messages.is_empty() {
            return bad("no messages");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be non-negative");
        }
        match self.messages.iter().find(|m| m.role != Role::System) {
            Some(m) if m.role == Role::User => {}
            _ => return bad("first non-system message must come from the user"),
        }
        let convo: Vec<Role> = self
            .messages
            .iter()
            .map(|m| m.role)
            .filter(|r| *r != Role::System)
            .collect();
        if convo.windows(2).any(|w| w[0] == w[1]) {
            return bad("user and assistant turns must alternate");
        }
        Ok(())
    }

    /// All message contents joined by newlines.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("http status {0}")]
    Http(u16),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("mock script has no entry matching the request")]
    ScriptExhausted,
    #[error("backend not configured: {0}")]
    NotConfigured(String),
    #[error("no price for model {0:?}")]
    UnpricedModel(String),
    #[error("ledger i/o: {0}")]
    Ledger(String),
}

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Purpose {
    ReducerGen,
    PureLlmReduce,
    Repair,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Counting semaphore bounding in-flight calls.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(cap: usize) -> Self {
        Gate { free: Mutex::new(cap.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

struct LedgerState {
    ledger: UsageLedger,
    sink: Option<File>,
}

/// Shared chat client. Cheap to clone; clones share the ledger and the
/// concurrency cap.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    model: String,
    pricing: PricingTable,
    state: Arc<Mutex<LedgerState>>,
    gate: Arc<Gate>,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient").field("model", &self.model).finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>, pricing: PricingTable) -> Self {
        LlmClient {
            backend,
            model: model.into(),
            pricing,
            state: Arc::new(Mutex::new(LedgerState { ledger: UsageLedger::default(), sink: None })),
            gate: Arc::new(Gate::new(4)),
        }
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.gate = Arc::new(Gate::new(cap));
        self
    }

    /// Persist the ledger as JSON lines at `path`, resuming from any entries
    /// already there.
    pub fn with_ledger_file(self, path: &Path) -> Result<Self, LlmError> {
        let io = |e: std::io::Error| LlmError::Ledger(e.to_string());
        let existing = match std::fs::read_to_string(path) {
            Ok(text) => UsageLedger::from_jsonl(&text).map_err(LlmError::Ledger)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => UsageLedger::default(),
            Err(e) => return Err(io(e)),
        };
        let sink = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        {
            let mut st = self.state.lock().unwrap();
            st.ledger = existing;
            st.sink = Some(sink);
        }
        Ok(self)
    }

    /// A clone that talks to `model`, sharing ledger and cap with `self`.
    pub fn with_model(&self, model: impl Into<String>) -> Self {
        LlmClient { model: model.into(), ..self.clone() }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn pricing(&self) -> &PricingTable {
        &self.pricing
    }

    pub fn ledger(&self) -> UsageLedger {
        self.state.lock().unwrap().ledger.clone()
    }

    /// Build a request for the client's model.
    pub fn request(&self, messages: Vec<Message>, temperature: f64) -> ChatRequest {
        ChatRequest::new(self.model.clone(), messages, temperature)
    }

    /// Send `req`; `context` labels the ledger entry (e.g. `task/bug/sample_3`).
    pub fn chat(&self, req: &ChatRequest, purpose: Purpose, context: &str) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let resp = {
            let _slot = self.gate.acquire();
            self.backend.complete(req)?
        };
        let cost_usd = self
            .pricing
            .get(&req.model)
            .map(|p| p.cost(resp.input_tokens, resp.output_tokens));
        let mut st = self.state.lock().unwrap();
        let entry = LedgerEntry {
            call_id: st.ledger.next_call_id(),
            purpose,
            context: context.to_string(),
            model: req.model.clone(),
            input_tokens: resp.input_tokens,
            output_tokens: resp.output_tokens,
            cost_usd,
        };
        if let Some(sink) = st.sink.as_mut() {
            let line = serde_json::to_string(&entry).map_err(|e| LlmError::Ledger(e.to_string()))?;
            writeln!(sink, "{line}").map_err(|e| LlmError::Ledger(e.to_string()))?;
        }
        st.ledger.entries.push(entry);
        Ok(resp)
    }
}

/// Content of the first fenced code block in `text`, any language tag.
///
/// ```
/// # use shrinkfix_core::llm::extract_code_block;
/// let reply = "Here you go:\n```cpp\nint main() {}\n```\nGood luck.";
/// assert_eq!(extract_code_block(reply).as_deref(), Some("int main() {}\n"));
/// assert_eq!(extract_code_block("no code here"), None);
/// ```
pub fn extract_code_block(text: &str) -> Option<String> {
    let mut lines = text.split_inclusive('\n');
    let fence = loop {
        let line = lines.next()?;
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            break trimmed.bytes().take_while(|&b| b == b'`').count();
        }
    };
    let mut body = String::new();
    for line in lines {
        let t = line.trim();
        if t.len() >= fence && t.bytes().all(|b| b == b'`') {
            return Some(body);
        }
        body.push_str(line);
    }
    // Unterminated fence: take the rest of the reply.
    if !body.ends_with('\n') && !body.is_empty() {
        body.push('\n');
    }
    Some(body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = ChatRequest::new("m", vec![Message::system("s"), Message::user("u")], 0.0);
        assert!(ok.validate().is_ok());
        assert!(ChatRequest::new("m", vec![], 0.0).validate().is_err());
        assert!(ChatRequest::new("m", vec![Message::assistant("a")], 0.0).validate().is_err());
        assert!(ChatRequest::new("m", vec![Message::user("u")], -1.0).validate().is_err());
        let twice = ChatRequest::new("m", vec![Message::user("a"), Message::user("b")], 0.0);
        assert!(twice.validate().is_err());
    }

    #[test]
    fn code_block_extraction() {
        assert_eq!(extract_code_block("```\n\n```").as_deref(), Some("\n"));
        assert_eq!(extract_code_block("```\n```").as_deref(), Some(""));
        let two = "```py\nfirst\n```\n```\nsecond\n```";
        assert_eq!(extract_code_block(two).as_deref(), Some("first\n"));
        assert_eq!(extract_code_block("```c\nopen").as_deref(), Some("open\n"));
        let nested = "````md\n```\ninner\n```\n````";
        assert_eq!(extract_code_block(nested).as_deref(), Some("```\ninner\n```\n"));
    }

    #[test]
    fn client_records_ledger() {
        let mock = MockBackend::new(vec![MockEntry::new("*", "hello").tokens(10, 2)]);
        let client = LlmClient::new(Arc::new(mock), "qwen-plus", PricingTable::default());
        let req = client.request(vec![Message::user("hi")], 0.0);
        let resp = client.chat(&req, Purpose::Repair, "t/b/sample_1").unwrap();
        assert_eq!(resp.content, "hello");
        let ledger = client.ledger();
        assert_eq!(ledger.entries.len(), 1);
        assert_eq!(ledger.entries[0].input_tokens, 10);
        assert!(ledger.entries[0].cost_usd.is_some());
        assert!(matches!(client.chat(&req, Purpose::Repair, "again"), Err(LlmError::ScriptExhausted)));
    }

    #[test]
    fn ledger_file_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mk = || {
            let mock = MockBackend::new(vec![MockEntry::new("*", "x").tokens(1, 1)]);
            LlmClient::new(Arc::new(mock), "m", PricingTable::default()).with_ledger_file(&path).unwrap()
        };
        let a = mk();
        a.chat(&a.request(vec![Message::user("q")], 0.0), Purpose::Repair, "c").unwrap();
        let b = mk();
        b.chat(&b.request(vec![Message::user("q")], 0.0), Purpose::Repair, "c").unwrap();
        let ledger = b.ledger();
        assert_eq!(ledger.entries.len(), 2);
        assert_eq!(ledger.entries[1].call_id, 2);
        let on_disk = UsageLedger::from_jsonl(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(on_disk, ledger);
    }
}
