//! Generating a task-specific reducer script with a one-shot prompt.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{markdown_title, Task};
use crate::hash::Fingerprint;
use crate::llm::{extract_code_block, LlmClient, LlmError, Message, Purpose};
use crate::process::{self, shell_quote, Exit, Invocation, Sink};
use crate::template::{render, TemplateError};

const TEMPLATE: &str = include_str!("../assets/reducer_prompt.md");
const EXAMPLE_STATEMENT: &str = include_str!("../assets/example/statement.md");
const EXAMPLE_REDUCER: &str = include_str!("../assets/example/reducer.py");

const VALIDATOR_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptOrigin {
    LlmGenerated,
    UserProvided,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducerScript {
    pub source: String,
    pub origin: ScriptOrigin,
    /// Fingerprint of the prompt that produced the script; for user scripts,
    /// of the source itself.
    pub prompt_fingerprint: Fingerprint,
    pub validated: bool,
}

impl ReducerScript {
    /// Wrap a hand-written script, running the same static check as for
    /// generated ones.
    pub fn user_provided(source: String, validation_command: Option<&str>) -> Result<Self, StaticCheckFail> {
        static_check(&source, validation_command)?;
        Ok(ReducerScript {
            prompt_fingerprint: Fingerprint::of(source.as_bytes()),
            source,
            origin: ScriptOrigin::UserProvided,
            validated: true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneShotExample {
    pub example_problem_id: String,
    pub example_statement: String,
    pub example_reducer_source: String,
}

impl OneShotExample {
    /// The shipped example: a "maximum of a sequence" task and its reducer.
    pub fn builtin() -> Self {
        OneShotExample {
            example_problem_id: "EX-MAX".into(),
            example_statement: EXAMPLE_STATEMENT.into(),
            example_reducer_source: EXAMPLE_REDUCER.into(),
        }
    }

    fn title(&self) -> &str {
        markdown_title(&self.example_statement).unwrap_or(&self.example_problem_id)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StaticCheckFail {
    #[error("reply has no fenced code block")]
    NoCodeBlock,
    #[error("script is empty")]
    Empty,
    #[error("validator exited with status {code}: {stderr}")]
    ValidatorExit { code: i32, stderr: String },
    #[error("validator timed out")]
    ValidatorTimeout,
    #[error("could not run validator: {0}")]
    ValidatorSpawn(String),
}

#[derive(Debug, Error)]
pub enum ReducerGenError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("static check failed: {0}")]
    StaticCheck(#[from] StaticCheckFail),
    #[error("reducer cache: {0}")]
    Cache(#[from] io::Error),
}

pub fn build_reducer_prompt(task: &Task, example: &OneShotExample) -> Result<String, TemplateError> {
    if task.statement.trim().is_empty() {
        return Err(TemplateError::EmptyValue("target_problem_description_md".into()));
    }
    for (name, v) in [
        ("EXAMPLE_PROBLEM_ID_STR", &example.example_problem_id),
        ("example_problem_description_md", &example.example_statement),
        ("example_reducer_code", &example.example_reducer_source),
    ] {
        if v.trim().is_empty() {
            return Err(TemplateError::EmptyValue(name.into()));
        }
    }
    render(
        TEMPLATE,
        &[
            ("EXAMPLE_PROBLEM_ID_STR", &example.example_problem_id),
            ("example_problem_title", example.title()),
            ("example_problem_description_md", example.example_statement.trim_end()),
            ("example_reducer_code", example.example_reducer_source.trim_end()),
            ("target_problem_id_input", &task.id),
            ("target_problem_title", task.title()),
            ("target_problem_description_md", task.statement.trim_end()),
        ],
    )
}

/// Non-empty source, and when `validation_command` is given (with `{script}`
/// standing for the script path, e.g. `python3 -m py_compile {script}`), a
/// zero exit from it.
pub fn static_check(source: &str, validation_command: Option<&str>) -> Result<(), StaticCheckFail> {
    if source.trim().is_empty() {
        return Err(StaticCheckFail::Empty);
    }
    let Some(cmd) = validation_command.filter(|c| !c.trim().is_empty()) else {
        return Ok(());
    };
    let spawn = |e: io::Error| StaticCheckFail::ValidatorSpawn(e.to_string());
    let dir = tempfile::tempdir().map_err(spawn)?;
    let path = dir.path().join("reducer.py");
    fs::write(&path, source).map_err(spawn)?;
    let shell = cmd.replace("{script}", &shell_quote(&path.to_string_lossy()));
    let finished = process::run(Invocation {
        shell: &shell,
        cwd: dir.path(),
        env: vec![],
        stdin: Stdio::null(),
        sink: Sink::Capture { max_stdout: 64 * 1024, max_stderr: 64 * 1024 },
        timeout: VALIDATOR_TIMEOUT,
    })
    .map_err(spawn)?;
    match finished.exit {
        Exit::Code(0) => Ok(()),
        Exit::TimedOut => Err(StaticCheckFail::ValidatorTimeout),
        Exit::Code(code) => Err(StaticCheckFail::ValidatorExit {
            code,
            stderr: String::from_utf8_lossy(&finished.stderr).trim().to_string(),
        }),
        Exit::Signal(s) => Err(StaticCheckFail::ValidatorExit { code: 128 + s, stderr: String::new() }),
        Exit::OutputOverflow => Err(StaticCheckFail::ValidatorExit { code: -1, stderr: "output overflow".into() }),
    }
}

/// A generated script, or the raw reply when the reply failed the check.
struct Attempt {
    reply: String,
    result: Result<ReducerScript, ReducerGenError>,
}

fn attempt(task: &Task, example: &OneShotExample, client: &LlmClient, validation_command: Option<&str>) -> Result<Attempt, ReducerGenError> {
    let prompt = build_reducer_prompt(task, example)?;
    let fingerprint = Fingerprint::of(prompt.as_bytes());
    let req = client.request(vec![Message::user(prompt)], 0.0);
    let reply = client.chat(&req, Purpose::ReducerGen, &task.id)?.content;
    let result = extract_code_block(&reply)
        .ok_or(StaticCheckFail::NoCodeBlock)
        .and_then(|source| static_check(&source, validation_command).map(|()| source))
        .map(|source| ReducerScript { source, origin: ScriptOrigin::LlmGenerated, prompt_fingerprint: fingerprint, validated: true })
        .map_err(ReducerGenError::from);
    Ok(Attempt { reply, result })
}

/// One greedy chat call; the first fenced block of the reply must pass
/// [`static_check`].
pub fn generate_reducer(
    task: &Task,
    example: &OneShotExample,
    client: &LlmClient,
    validation_command: Option<&str>,
) -> Result<ReducerScript, ReducerGenError> {
    attempt(task, example, client, validation_command)?.result
}

/// On-disk store of validated scripts, keyed by task id and prompt
/// fingerprint. Concurrent requests for the same key generate once.
#[derive(Debug)]
pub struct ReducerCache {
    dir: PathBuf,
    in_flight: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl ReducerCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReducerCache { dir: dir.into(), in_flight: Mutex::new(HashMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn key_path(&self, task: &Task, example: &OneShotExample) -> Result<(PathBuf, Fingerprint), TemplateError> {
        let fp = Fingerprint::of(build_reducer_prompt(task, example)?.as_bytes());
        Ok((self.dir.join(format!("{}.{}.script", task.id, fp.short_hex())), fp))
    }

    /// Where the script for `task` is (or would be) stored.
    pub fn path_for(&self, task: &Task, example: &OneShotExample) -> Result<PathBuf, TemplateError> {
        Ok(self.key_path(task, example)?.0)
    }

    pub fn lookup(&self, task: &Task, example: &OneShotExample) -> Result<Option<ReducerScript>, ReducerGenError> {
        let (path, fp) = self.key_path(task, example)?;
        match fs::read_to_string(&path) {
            Ok(source) => Ok(Some(ReducerScript { source, origin: ScriptOrigin::LlmGenerated, prompt_fingerprint: fp, validated: true })),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Cached script if present, else generate and store it. A reply that
    /// fails the static check is kept next to the slot as `.rejected`.
    pub fn get_or_generate(
        &self,
        task: &Task,
        example: &OneShotExample,
        client: &LlmClient,
        validation_command: Option<&str>,
    ) -> Result<ReducerScript, ReducerGenError> {
        let (path, _) = self.key_path(task, example)?;
        let lock = self.in_flight.lock().unwrap().entry(path.clone()).or_default().clone();
        let _held = lock.lock().unwrap();
        if let Some(s) = self.lookup(task, example)? {
            return Ok(s);
        }
        fs::create_dir_all(&self.dir)?;
        let Attempt { reply, result } = attempt(task, example, client, validation_command)?;
        match &result {
            Ok(script) => {
                let tmp = path.with_extension("tmp");
                fs::write(&tmp, &script.source)?;
                fs::rename(&tmp, &path)?;
            }
            Err(_) => fs::write(path.with_extension("rejected"), reply)?,
        }
        result
    }
}
