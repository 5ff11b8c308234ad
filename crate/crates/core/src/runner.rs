//! Compile program sources through a configurable command template and run
//! the resulting executables with stdin/stdout capture and resource limits.
//!
//! Templates are POSIX shell command lines. `compile_command` must mention
//! `{src}` and `{out}`; `run_command` must mention `{bin}`. The placeholders
//! are replaced with shell-quoted absolute paths. Setting the compile command
//! to a plain copy turns the runner into script mode, where "binaries" are
//! interpreter scripts; the test-suites use this to run without a compiler.

use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Payload;
use crate::hash::Fingerprint;
use crate::process::{self, shell_quote, Exit, Invocation, Sink};

pub const DEFAULT_COMPILE_COMMAND: &str = "g++ -std=c++20 -O2 -pipe -o {out} {src}";
pub const DEFAULT_RUN_COMMAND: &str = "{bin}";

/// A compile command that turns the runner into script mode.
pub const SCRIPT_COMPILE_COMMAND: &str = "cp {src} {out} && chmod +x {out}";

const STDERR_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolchainConfig {
    pub compile_command: String,
    pub run_command: String,
    pub compile_timeout_secs: f64,
    pub run_timeout_secs: f64,
    pub max_output_bytes: usize,
    /// Root for per-run working directories and the binary cache.
    pub scratch_root: PathBuf,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        ToolchainConfig {
            compile_command: DEFAULT_COMPILE_COMMAND.into(),
            run_command: DEFAULT_RUN_COMMAND.into(),
            compile_timeout_secs: 10.0,
            run_timeout_secs: 5.0,
            max_output_bytes: 64 << 20,
            scratch_root: std::env::temp_dir().join("shrinkfix"),
        }
    }
}

impl ToolchainConfig {
    /// Script mode: sources are copied verbatim and run through `interpreter`.
    pub fn script_mode(interpreter: &str, scratch_root: impl Into<PathBuf>) -> Self {
        ToolchainConfig {
            compile_command: SCRIPT_COMPILE_COMMAND.into(),
            run_command: format!("{interpreter} {{bin}}"),
            scratch_root: scratch_root.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |reason: &str| Err(RunnerError::InvalidConfig(reason.to_string()));
        if [self.compile_timeout_secs, self.run_timeout_secs].iter().any(|t| t.is_nan() || *t <= 0.0) {
            return bad("timeouts must be positive");
        }
        if !self.compile_command.contains("{src}") || !self.compile_command.contains("{out}") {
            return bad("compile_command must contain {src} and {out}");
        }
        if !self.run_command.contains("{bin}") {
            return bad("run_command must contain {bin}");
        }
        Ok(())
    }

    pub fn compile_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.compile_timeout_secs)
    }

    pub fn run_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.run_timeout_secs)
    }

    fn work_dir(&self) -> io::Result<tempfile::TempDir> {
        let root = self.scratch_root.join("work");
        fs::create_dir_all(&root)?;
        tempfile::Builder::new().prefix("run-").tempdir_in(root)
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid toolchain config: {0}")]
    InvalidConfig(String),
    #[error("failed to spawn process: {0}")]
    Spawn(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompileFailure {
    Timeout,
    NonZeroExit(i32),
    EmptySource,
}

#[derive(Debug, Clone, Error)]
#[error("compilation failed ({kind:?})")]
pub struct CompileError {
    pub kind: CompileFailure,
    pub diagnostics: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Ok,
    /// Exit code; death by signal `s` is reported as `128 + s`.
    NonZeroExit(i32),
    Timeout,
    OutputTruncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    #[serde(skip)]
    pub stdout: Vec<u8>,
    #[serde(skip)]
    pub stderr: Vec<u8>,
    pub wall_time_secs: f64,
}

impl RunOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// An executable produced by [`compile`], ready for [`execute`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledProgram {
    bin: PathBuf,
    run_command: String,
}

impl CompiledProgram {
    pub fn binary(&self) -> &Path {
        &self.bin
    }

    /// The fully resolved shell command that runs this program.
    pub fn shell_command(&self) -> String {
        self.run_command
            .replace("{bin}", &shell_quote(&self.bin.to_string_lossy()))
    }
}

fn absolute(p: &Path) -> io::Result<PathBuf> {
    if p.is_absolute() {
        Ok(p.to_path_buf())
    } else {
        Ok(std::env::current_dir()?.join(p))
    }
}

/// Compile `source`, reusing a cached binary when the same source was
/// already built with the same compile command.
pub fn compile(source: &str, cfg: &ToolchainConfig) -> Result<CompiledProgram, CompileError> {
    let env_err = |e: io::Error| CompileError {
        kind: CompileFailure::NonZeroExit(-1),
        diagnostics: format!("environment error: {e}"),
    };
    if source.trim().is_empty() {
        return Err(CompileError {
            kind: CompileFailure::EmptySource,
            diagnostics: String::new(),
        });
    }
    cfg.validate().map_err(|e| CompileError {
        kind: CompileFailure::NonZeroExit(-1),
        diagnostics: e.to_string(),
    })?;

    let key = Fingerprint::of_parts(&[source.as_bytes(), cfg.compile_command.as_bytes()]);
    let cache_root = absolute(&cfg.scratch_root.join("bin-cache")).map_err(env_err)?;
    let cached = cache_root.join(key.to_hex()).join("prog");
    let program = CompiledProgram {
        bin: cached.clone(),
        run_command: cfg.run_command.clone(),
    };
    if cached.exists() {
        return Ok(program);
    }

    fs::create_dir_all(&cache_root).map_err(env_err)?;
    let build = tempfile::Builder::new()
        .prefix("build-")
        .tempdir_in(&cache_root)
        .map_err(env_err)?;
    let src = build.path().join("main.cpp");
    let out = build.path().join("prog");
    fs::write(&src, source).map_err(env_err)?;
    let shell = cfg
        .compile_command
        .replace("{src}", &shell_quote(&src.to_string_lossy()))
        .replace("{out}", &shell_quote(&out.to_string_lossy()));
    let finished = process::run(Invocation {
        shell: &shell,
        cwd: build.path(),
        env: vec![],
        stdin: Stdio::null(),
        sink: Sink::Capture {
            max_stdout: STDERR_CAP,
            max_stderr: STDERR_CAP,
        },
        timeout: cfg.compile_timeout(),
    })
    .map_err(env_err)?;
    let mut diagnostics = String::from_utf8_lossy(&finished.stderr).into_owned();
    diagnostics.push_str(&String::from_utf8_lossy(&finished.stdout));
    match finished.exit {
        Exit::Code(0) if out.exists() => {}
        Exit::Code(0) => {
            return Err(CompileError {
                kind: CompileFailure::NonZeroExit(0),
                diagnostics: format!("compiler produced no output file\n{diagnostics}"),
            })
        }
        Exit::TimedOut => {
            return Err(CompileError {
                kind: CompileFailure::Timeout,
                diagnostics,
            })
        }
        Exit::Code(c) => {
            return Err(CompileError {
                kind: CompileFailure::NonZeroExit(c),
                diagnostics,
            })
        }
        Exit::Signal(s) => {
            return Err(CompileError {
                kind: CompileFailure::NonZeroExit(128 + s),
                diagnostics,
            })
        }
        Exit::OutputOverflow => {
            return Err(CompileError {
                kind: CompileFailure::NonZeroExit(-1),
                diagnostics: "compiler diagnostics exceeded capture limit".into(),
            })
        }
    }

    let slot = cached.parent().unwrap();
    fs::create_dir_all(slot).map_err(env_err)?;
    // A concurrent build of the same key may win the rename; either binary is fine.
    if let Err(e) = fs::rename(&out, &cached) {
        if !cached.exists() {
            return Err(env_err(e));
        }
    }
    Ok(program)
}

/// Run `prog` with `input` on stdin.
pub fn execute(
    prog: &CompiledProgram,
    input: &[u8],
    cfg: &ToolchainConfig,
) -> Result<RunOutcome, RunnerError> {
    let dir = cfg.work_dir()?;
    let path = dir.path().join("input");
    fs::write(&path, input)?;
    run_with_stdin(prog, &path, dir.path(), cfg)
}

/// Run `prog` with a corpus payload on stdin, streaming file-backed payloads
/// directly from disk.
pub fn execute_payload(
    prog: &CompiledProgram,
    input: &Payload,
    cfg: &ToolchainConfig,
) -> Result<RunOutcome, RunnerError> {
    match input {
        Payload::File { path, .. } => {
            let dir = cfg.work_dir()?;
            run_with_stdin(prog, path, dir.path(), cfg)
        }
        Payload::Inline(bytes) => execute(prog, bytes, cfg),
    }
}

fn run_with_stdin(
    prog: &CompiledProgram,
    input: &Path,
    cwd: &Path,
    cfg: &ToolchainConfig,
) -> Result<RunOutcome, RunnerError> {
    let stdin = File::open(input)?;
    let shell = prog.shell_command();
    let finished = process::run(Invocation {
        shell: &shell,
        cwd,
        env: vec![],
        stdin: Stdio::from(stdin),
        sink: Sink::Capture {
            max_stdout: cfg.max_output_bytes,
            max_stderr: STDERR_CAP,
        },
        timeout: cfg.run_timeout(),
    })?;
    let status = match finished.exit {
        Exit::Code(0) => RunStatus::Ok,
        Exit::Code(c) => RunStatus::NonZeroExit(c),
        Exit::Signal(s) => RunStatus::NonZeroExit(128 + s),
        Exit::TimedOut => RunStatus::Timeout,
        Exit::OutputOverflow => RunStatus::OutputTruncated,
    };
    Ok(RunOutcome {
        status,
        stdout: finished.stdout,
        stderr: finished.stderr,
        wall_time_secs: finished.wall_time.as_secs_f64(),
    })
}
