use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

pub const API_KEY_ENV: &str = "RF_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// e.g. `https://dashscope.aliyuncs.com/compatible-mode/v1`
    pub base_url: String,
    pub request_timeout_secs: f64,
    pub max_attempts: u32,
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: String::new(),
            request_timeout_secs: 120.0,
            max_attempts: 3,
            backoff_initial_ms: 500,
            backoff_max_ms: 8_000,
        }
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` backend.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    cfg: HttpConfig,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        if cfg.base_url.is_empty() {
            return Err(LlmError::NotConfigured("base_url is empty".into()));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.request_timeout_secs))
            .build();
        let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        Ok(HttpBackend { agent, url, api_key, cfg })
    }

    /// Reads the API key from `RF_API_KEY`.
    pub fn from_env(cfg: HttpConfig) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(cfg, key)
    }

    fn payload(req: &ChatRequest) -> Value {
        let mut body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "stream": false,
        });
        if let Some(m) = req.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn parse(body: &Value) -> Result<ChatResponse, LlmError> {
        let malformed = |what: &str| LlmError::Malformed(what.to_string());
        let content = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing choices[0].message.content"))?;
        let usage = body.get("usage").ok_or_else(|| malformed("missing usage"))?;
        let tokens = |k: &str| usage.get(k).and_then(Value::as_u64).ok_or_else(|| malformed(k));
        Ok(ChatResponse {
            content: content.to_string(),
            input_tokens: tokens("prompt_tokens")?,
            output_tokens: tokens("completion_tokens")?,
        })
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, Attempt> {
        let mut call = self.agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(body.clone()) {
            Ok(resp) => {
                let json: Value = resp
                    .into_json()
                    .map_err(|e| Attempt::Fatal(LlmError::Malformed(e.to_string())))?;
                Self::parse(&json).map_err(Attempt::Fatal)
            }
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Err(Attempt::Retry(LlmError::Http(code)))
            }
            Err(ureq::Error::Status(code, _)) => Err(Attempt::Fatal(LlmError::Http(code))),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    Err(Attempt::Retry(LlmError::Timeout))
                } else {
                    Err(Attempt::Retry(LlmError::Malformed(format!("transport: {msg}"))))
                }
            }
        }
    }
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = Self::payload(req);
        let attempts = self.cfg.max_attempts.max(1);
        let mut delay = Duration::from_millis(self.cfg.backoff_initial_ms);
        let cap = Duration::from_millis(self.cfg.backoff_max_ms);
        let mut last = String::new();
        for i in 0..attempts {
            match self.attempt(&body) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("chat attempt {} of {attempts} failed: {e}", i + 1);
                    last = e.to_string();
                }
            }
            if i + 1 < attempts {
                thread::sleep(delay);
                delay = (delay * 2).min(cap);
            }
        }
        Err(LlmError::RetriesExhausted { attempts, last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Message;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves the canned `(status, body)` replies in order, forwarding each
    /// request body to the returned channel.
    fn stub(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim_end().to_ascii_lowercase();
                    if l.is_empty() {
                        break;
                    }
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                tx.send(String::from_utf8(buf).unwrap()).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), rx)
    }

    fn cfg(base_url: String) -> HttpConfig {
        HttpConfig { base_url, backoff_initial_ms: 1, backoff_max_ms: 2, request_timeout_secs: 5.0, ..Default::default() }
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;

    #[test]
    fn success_and_temperature_echo() {
        let (url, rx) = stub(vec![(200, OK.into())]);
        let backend = HttpBackend::new(cfg(url), Some("k".into())).unwrap();
        let mut req = ChatRequest::new("qwen-plus", vec![Message::user("hello")], 0.8);
        req.max_tokens = Some(64);
        let resp = backend.complete(&req).unwrap();
        assert_eq!(resp, ChatResponse { content: "hi there".into(), input_tokens: 12, output_tokens: 3 });
        let sent: Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["temperature"], json!(0.8));
        assert_eq!(sent["model"], "qwen-plus");
        assert_eq!(sent["max_tokens"], 64);
        assert_eq!(sent["messages"][0]["role"], "user");
    }

    #[test]
    fn rate_limited_three_times() {
        let busy = (429, "{}".to_string());
        let (url, rx) = stub(vec![busy.clone(), busy.clone(), busy]);
        let backend = HttpBackend::new(cfg(url), None).unwrap();
        let err = backend.complete(&ChatRequest::new("m", vec![Message::user("x")], 0.0)).unwrap_err();
        assert!(matches!(err, LlmError::RetriesExhausted { attempts: 3, .. }), "{err:?}");
        assert_eq!(rx.try_iter().count(), 3);
    }

    #[test]
    fn transient_failure_then_success() {
        let (url, _rx) = stub(vec![(503, "{}".into()), (200, OK.into())]);
        let backend = HttpBackend::new(cfg(url), None).unwrap();
        let resp = backend.complete(&ChatRequest::new("m", vec![Message::user("x")], 0.0)).unwrap();
        assert_eq!(resp.content, "hi there");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, _rx) = stub(vec![(401, "{}".into())]);
        let backend = HttpBackend::new(cfg(url), None).unwrap();
        let err = backend.complete(&ChatRequest::new("m", vec![Message::user("x")], 0.0)).unwrap_err();
        assert_eq!(err, LlmError::Http(401));
    }

    #[test]
    fn malformed_body() {
        let (url, _rx) = stub(vec![(200, r#"{"choices":[]}"#.into())]);
        let backend = HttpBackend::new(cfg(url), None).unwrap();
        let err = backend.complete(&ChatRequest::new("m", vec![Message::user("x")], 0.0)).unwrap_err();
        assert!(matches!(err, LlmError::Malformed(_)));
        assert!(HttpBackend::new(HttpConfig::default(), None).is_err());
    }
}
