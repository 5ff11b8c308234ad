//! Batch orchestration behind the command-line subcommands.
//!
//! A run lives in `<output_dir>/runs/<run_id>/`:
//!
//! ```text
//! config.toml                          resolved configuration
//! ledger.jsonl                         one line per LLM call
//! reduced/<task>/<bug>.in              reduced input
//! reduced/<task>/<bug>.json            reduction record
//! repair/<strategy>/<task>/<bug>.json  repair record
//! transcripts/<task>/<bug>/<strategy>/sample_<k>.{prompt,reply,verdict}
//! reports/                             exported tables
//! ```
//!
//! Record files double as completion markers: rerunning a command with the
//! same run id skips every bug that already has one.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Backend, Engine, RepairMode, RunConfig};
use crate::corpus::{load_corpus, median_failing_input_bytes, task_stats, Bug, Difficulty, Task};
use crate::llm::{cost, HttpBackend, LlmClient, MockBackend, UsageLedger};
use crate::metrics::{build_report, export_reports, ReductionRow, RepairRecord};
use crate::oracle::{DifferentialOracle, JudgeOptions};
use crate::reducer::{
    ddmin, pure_llm_reduce, run_external_reducer, BugContext, DdminOptions, ExternalReducerConfig, ReductionResult,
    ReductionSummary,
};
use crate::reducergen::{OneShotExample, ReducerCache};
use crate::repair::{
    build_repair_prompt, conversational_repair, sample_patches, validate_patch, ConversationOptions, ExpectedOutputs,
    FailingCase, PromptStrategy, RepairContext, SamplingOptions, StrategyKind, Transcript,
};
use crate::runner::{compile, CompileError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    /// Bad arguments, configuration or corpus.
    #[error("{0}")]
    Usage(String),
    /// Toolchain, filesystem or LLM backend trouble.
    #[error("{0}")]
    Environment(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Environment(_) => 2,
        }
    }
}

fn env_err(context: &str) -> impl Fn(io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Environment(format!("{context}: {e}"))
}

/// Chooses bugs by task id and bug id. Empty lists match everything; a bug
/// may be named as `bug` or `task/bug`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selector {
    pub tasks: Vec<String>,
    pub bugs: Vec<String>,
}

impl Selector {
    pub fn all() -> Self {
        Selector::default()
    }

    fn task_matches(&self, task: &Task) -> bool {
        self.tasks.is_empty() || self.tasks.contains(&task.id)
    }

    fn matches(&self, task: &Task, bug: &Bug) -> bool {
        self.task_matches(task)
            && (self.bugs.is_empty()
                || self.bugs.iter().any(|b| *b == bug.id || *b == format!("{}/{}", task.id, bug.id)))
    }
}

/// Restrict ids to characters that are safe in a single path component.
fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn key(task: &Task, bug: &Bug) -> String {
    format!("{}/{}", task.id, bug.id)
}

/// Results of a batch command: per-item successes plus per-item failures.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub done: Vec<T>,
    pub failures: Vec<(String, String)>,
}

impl<T> Batch<T> {
    fn collect(items: Vec<(String, Result<T, String>)>) -> Self {
        let mut b = Batch { done: Vec::new(), failures: Vec::new() };
        for (k, r) in items {
            match r {
                Ok(v) => b.done.push(v),
                Err(e) => b.failures.push((k, e)),
            }
        }
        b
    }
}

/// Map `f` over `items` with at most `workers` threads; output order
/// matches input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Reductions, repair runs and report paths of one `eval`.
pub type EvalOutcome = (Batch<ReductionRecord>, Batch<RepairRecord>, Vec<PathBuf>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub task_id: String,
    pub bug_id: String,
    pub difficulty: Difficulty,
    pub engine: Engine,
    pub summary: ReductionSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyRow {
    pub task_id: String,
    pub bug_id: String,
    pub reference_passes: bool,
    pub failing_input_interesting: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub rows: Vec<(String, usize, usize, usize, u64)>,
    pub median_failing_input_bytes: Option<f64>,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>6} {:>6} {:>7} {:>14}", "group", "tasks", "bugs", "tests", "test bytes")?;
        for (g, t, b, n, bytes) in &self.rows {
            writeln!(f, "{g:<8} {t:>6} {b:>6} {n:>7} {bytes:>14}")?;
        }
        match self.median_failing_input_bytes {
            Some(m) => writeln!(f, "median failing input: {m} bytes"),
            None => writeln!(f, "median failing input: n/a"),
        }
    }
}

/// Compiled programs and the failing input of one bug.
struct Prepared<'a> {
    task: &'a Task,
    bug: &'a Bug,
    oracle: DifferentialOracle,
    i0: Vec<u8>,
}

impl Prepared<'_> {
    fn ctx(&self) -> BugContext<'_> {
        BugContext { task: self.task, bug: self.bug, oracle: &self.oracle, failing_input: &self.i0 }
    }
}

fn describe_compile(what: &str, e: CompileError) -> String {
    let diag: String = e.diagnostics.lines().take(5).collect::<Vec<_>>().join("\n");
    format!("{what} does not compile ({:?}): {diag}", e.kind)
}

pub struct Session {
    pub cfg: RunConfig,
    pub run_id: String,
    pub run_dir: PathBuf,
    pub tasks: Vec<Task>,
    llm: OnceLock<Result<LlmClient, PipelineError>>,
    reducers: ReducerCache,
    example: OneShotExample,
    expected: Mutex<HashMap<String, Arc<ExpectedOutputs>>>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session").field("run_id", &self.run_id).field("run_dir", &self.run_dir).finish_non_exhaustive()
    }
}

impl Session {
    /// Validate `cfg`, load the corpus and create the run directory.
    pub fn open(mut cfg: RunConfig) -> Result<Self, PipelineError> {
        cfg.validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
        let tasks = load_corpus(&cfg.corpus).map_err(|e| PipelineError::Usage(e.to_string()))?;
        let run_id = cfg.run_id.clone().unwrap_or_else(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            format!("run-{secs}")
        });
        cfg.run_id = Some(run_id.clone());
        let run_dir = cfg.output_dir.join("runs").join(slug(&run_id));
        fs::create_dir_all(&run_dir).map_err(env_err("run directory"))?;
        fs::write(run_dir.join("config.toml"), cfg.to_toml()).map_err(env_err("config snapshot"))?;
        let reducers = ReducerCache::new(cfg.output_dir.join("cache").join("reducers"));
        Ok(Session {
            cfg,
            run_id,
            run_dir,
            tasks,
            llm: OnceLock::new(),
            reducers,
            example: OneShotExample::builtin(),
            expected: Mutex::new(HashMap::new()),
        })
    }

    pub fn reducer_cache(&self) -> &ReducerCache {
        &self.reducers
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.run_dir.join("ledger.jsonl")
    }

    /// The repair-model client, built on first use. All clients of a
    /// session share one ledger.
    pub fn llm(&self) -> Result<LlmClient, PipelineError> {
        self.llm.get_or_init(|| self.build_llm()).clone()
    }

    fn build_llm(&self) -> Result<LlmClient, PipelineError> {
        let llm = &self.cfg.llm;
        let backend: Arc<dyn crate::llm::ChatBackend> = match llm.backend {
            Backend::Mock => {
                let path = llm.mock_script.as_ref().ok_or_else(|| {
                    PipelineError::Usage("the mock backend needs llm.mock_script (or --mock-script)".into())
                })?;
                Arc::new(MockBackend::from_file(path).map_err(|e| PipelineError::Usage(e.to_string()))?)
            }
            Backend::Live => {
                Arc::new(HttpBackend::from_env(llm.http.clone()).map_err(|e| PipelineError::Usage(e.to_string()))?)
            }
        };
        LlmClient::new(backend, llm.model.clone(), self.cfg.pricing_table())
            .with_max_in_flight(llm.max_in_flight)
            .with_ledger_file(&self.ledger_path())
            .map_err(|e| PipelineError::Environment(e.to_string()))
    }

    fn gen_llm(&self) -> Result<LlmClient, PipelineError> {
        Ok(self.llm()?.with_model(self.cfg.reducergen.model.clone()))
    }

    fn selected(&self, sel: &Selector) -> Result<Vec<(&Task, &Bug)>, PipelineError> {
        let out: Vec<_> = self
            .tasks
            .iter()
            .flat_map(|t| t.bugs.iter().map(move |b| (t, b)))
            .filter(|(t, b)| sel.matches(t, b))
            .collect();
        if out.is_empty() {
            return Err(PipelineError::Usage("no bugs matched the selection".into()));
        }
        Ok(out)
    }

    fn selected_tasks(&self, sel: &Selector) -> Result<Vec<&Task>, PipelineError> {
        let out: Vec<&Task> = self
            .tasks
            .iter()
            .filter(|t| t.bugs.iter().any(|b| sel.matches(t, b)))
            .collect();
        if out.is_empty() {
            return Err(PipelineError::Usage("no bugs matched the selection".into()));
        }
        Ok(out)
    }

    fn prepare<'a>(&self, task: &'a Task, bug: &'a Bug) -> Result<Prepared<'a>, String> {
        let tc = &self.cfg.toolchain;
        let reference = compile(&task.reference_source, tc).map_err(|e| describe_compile("reference", e))?;
        let buggy = compile(&bug.buggy_source, tc).map_err(|e| describe_compile("buggy program", e))?;
        let payload = task
            .failing_input(bug)
            .ok_or_else(|| format!("failing input {} not found", bug.failing_input_id))?;
        let i0 = payload.read().map_err(|e| format!("failing input: {e}"))?.into_owned();
        let oracle = DifferentialOracle {
            reference,
            buggy,
            toolchain: tc.clone(),
            options: JudgeOptions { comparison: self.cfg.reduce.comparison, fast_path: false },
        };
        Ok(Prepared { task, bug, oracle, i0 })
    }

    fn reduced_paths(&self, task: &Task, bug: &Bug) -> (PathBuf, PathBuf) {
        let dir = self.run_dir.join("reduced").join(slug(&task.id));
        (dir.join(format!("{}.in", slug(&bug.id))), dir.join(format!("{}.json", slug(&bug.id))))
    }

    fn load_reduction(&self, task: &Task, bug: &Bug, engine: Engine) -> Option<(ReductionRecord, Vec<u8>)> {
        let (input, record) = self.reduced_paths(task, bug);
        let rec: ReductionRecord = read_json(&record)?;
        let bytes = fs::read(&input).ok()?;
        (rec.engine == engine && bytes.len() as u64 == rec.summary.reduced_bytes).then_some((rec, bytes))
    }

    fn run_engine(&self, p: &Prepared<'_>, engine: Engine, generate: bool) -> Result<ReductionResult, String> {
        let rc = &self.cfg.reduce;
        match engine {
            Engine::Ddmin => {
                let opts = DdminOptions {
                    budget: rc.budget(),
                    unit_kind: rc.unit,
                    keep_best_on_timeout: rc.keep_best_on_timeout,
                    max_candidates: None,
                };
                Ok(ddmin(&p.i0, |c: &[u8]| p.oracle.is_interesting(c), &opts))
            }
            Engine::External => {
                let script = if generate {
                    let client = self.gen_llm().map_err(|e| e.to_string())?;
                    self.reducers
                        .get_or_generate(p.task, &self.example, &client, rc.validation_command.as_deref())
                        .map_err(|e| format!("reducer generation: {e}"))?
                } else {
                    self.reducers
                        .lookup(p.task, &self.example)
                        .map_err(|e| e.to_string())?
                        .ok_or_else(|| no_reducer(&p.task.id))?
                };
                let cfg = ExternalReducerConfig {
                    interpreter: rc.interpreter.clone(),
                    budget: rc.budget(),
                    keep_best_on_timeout: rc.keep_best_on_timeout,
                };
                Ok(run_external_reducer(&script, &p.ctx(), &cfg))
            }
            Engine::PureLlm => {
                let client = self.gen_llm().map_err(|e| e.to_string())?;
                pure_llm_reduce(&p.ctx(), &client).map_err(|e| format!("pure-LLM reduction: {e}"))
            }
        }
    }

    /// Reduction of one bug, from the run directory when already present.
    fn reduction_for(&self, task: &Task, bug: &Bug, engine: Engine, generate: bool) -> Result<(ReductionRecord, Vec<u8>), String> {
        if let Some(hit) = self.load_reduction(task, bug, engine) {
            return Ok(hit);
        }
        let p = self.prepare(task, bug)?;
        let result = self.run_engine(&p, engine, generate)?;
        log::info!("{}: {} ({} -> {} bytes)", key(task, bug), result.status, result.original_bytes, result.reduced_bytes());
        let rec = ReductionRecord {
            task_id: task.id.clone(),
            bug_id: bug.id.clone(),
            difficulty: task.difficulty,
            engine,
            summary: result.summary(),
        };
        let (input, record) = self.reduced_paths(task, bug);
        let write = || -> io::Result<()> {
            fs::create_dir_all(input.parent().unwrap())?;
            fs::write(&input, &result.reduced_input)?;
            write_json(&record, &rec)
        };
        write().map_err(|e| format!("saving reduction: {e}"))?;
        Ok((rec, result.reduced_input))
    }

    /// Reduce every selected bug. Without `generate`, the external engine
    /// only uses reducers already in the cache.
    pub fn reduce(&self, sel: &Selector, engine: Engine, generate: bool) -> Result<Batch<ReductionRecord>, PipelineError> {
        let bugs = self.selected(sel)?;
        if engine == Engine::External && !generate {
            for task in self.selected_tasks(sel)? {
                if self.load_any_reduction(task, sel, engine) {
                    continue;
                }
                let cached = self.reducers.lookup(task, &self.example).map_err(|e| PipelineError::Environment(e.to_string()))?;
                if cached.is_none() {
                    return Err(PipelineError::Usage(no_reducer(&task.id)));
                }
            }
        }
        let results = parallel_map(&bugs, self.cfg.parallelism, |(t, b)| {
            (key(t, b), self.reduction_for(t, b, engine, generate).map(|(rec, _)| rec))
        });
        Ok(Batch::collect(results))
    }

    fn load_any_reduction(&self, task: &Task, sel: &Selector, engine: Engine) -> bool {
        task.bugs.iter().filter(|b| sel.matches(task, b)).all(|b| self.load_reduction(task, b, engine).is_some())
    }

    /// Generate (or fetch from cache) one reducer per selected task;
    /// returns the cache paths.
    pub fn gen_reducers(&self, sel: &Selector) -> Result<Batch<(String, PathBuf)>, PipelineError> {
        let tasks = self.selected_tasks(sel)?;
        let client = self.gen_llm()?;
        let validation = self.cfg.reduce.validation_command.as_deref();
        let results = parallel_map(&tasks, self.cfg.parallelism, |t| {
            let r = self
                .reducers
                .get_or_generate(t, &self.example, &client, validation)
                .map_err(|e| {
                    let rejected = self.reducers.path_for(t, &self.example).map(|p| p.with_extension("rejected"));
                    match rejected {
                        Ok(p) if p.exists() => format!("{e} (reply saved to {})", p.display()),
                        _ => e.to_string(),
                    }
                })
                .and_then(|_| self.reducers.path_for(t, &self.example).map_err(|e| e.to_string()));
            (t.id.clone(), r.map(|p| (t.id.clone(), p)))
        });
        Ok(Batch::collect(results))
    }

    fn expected_for(&self, task: &Task) -> Result<Arc<ExpectedOutputs>, String> {
        if let Some(e) = self.expected.lock().unwrap().get(&task.id) {
            return Ok(e.clone());
        }
        let e = Arc::new(ExpectedOutputs::for_task(task, &self.cfg.toolchain).map_err(|e| e.to_string())?);
        self.expected.lock().unwrap().insert(task.id.clone(), e.clone());
        Ok(e)
    }

    fn repair_path(&self, task: &Task, bug: &Bug, strategy: StrategyKind) -> PathBuf {
        self.run_dir
            .join("repair")
            .join(strategy.as_str())
            .join(slug(&task.id))
            .join(format!("{}.json", slug(&bug.id)))
    }

    fn repair_one(&self, task: &Task, bug: &Bug, kind: StrategyKind, mode: RepairMode) -> Result<RepairRecord, String> {
        let marker = self.repair_path(task, bug, kind);
        if let Some(rec) = read_json::<RepairRecord>(&marker) {
            if rec.run.aborted.is_none() {
                return Ok(rec);
            }
        }
        let rc = &self.cfg.repair;
        let p = self.prepare(task, bug)?;
        let observe = |input: Vec<u8>| FailingCase::observe(input, &p.oracle).map_err(|e| e.to_string());
        let original = match kind {
            StrategyKind::OriginTest | StrategyKind::DiffLines | StrategyKind::ReducedPlusOrigin => Some(observe(p.i0.clone())?),
            _ => None,
        };
        let reduced = if kind.needs_reduction() {
            let (_, bytes) = self.reduction_for(task, bug, self.cfg.reduce.engine, true)?;
            Some(observe(bytes)?)
        } else {
            None
        };
        let strategy = PromptStrategy { kind, line_budget: rc.line_budget, diff_line_cap: rc.diff_line_cap };
        let prompt = build_repair_prompt(task, bug, &strategy, reduced.as_ref(), original.as_ref()).map_err(|e| e.to_string())?;
        let expected = self.expected_for(task)?;
        let transcript_dir = self
            .run_dir
            .join("transcripts")
            .join(slug(&task.id))
            .join(slug(&bug.id))
            .join(kind.as_str());
        let ctx = RepairContext {
            task,
            bug,
            strategy,
            prompt,
            expected: &expected,
            toolchain: &self.cfg.toolchain,
            comparison: self.cfg.reduce.comparison,
            transcript: Some(Transcript { dir: transcript_dir }),
        };
        let client = self.llm().map_err(|e| e.to_string())?;
        let opts = SamplingOptions { samples: rc.samples, temperature: rc.temperature };
        let run = match mode {
            RepairMode::Single => sample_patches(&ctx, &client, opts),
            RepairMode::Conversational => {
                conversational_repair(&ctx, &client, opts, ConversationOptions { max_retry: rc.max_retry, window: rc.window })
            }
        }
        .map_err(|e| e.to_string())?;
        let rec = RepairRecord { model: client.model().to_string(), difficulty: task.difficulty, run };
        write_json(&marker, &rec).map_err(|e| format!("saving repair record: {e}"))?;
        if let Some(why) = &rec.run.aborted {
            return Err(format!("sampling aborted after {} samples: {why}", rec.run.samples.len()));
        }
        Ok(rec)
    }

    /// Repair every selected bug under each of `strategies`.
    pub fn repair(&self, sel: &Selector, strategies: &[StrategyKind], mode: RepairMode) -> Result<Batch<RepairRecord>, PipelineError> {
        let bugs = self.selected(sel)?;
        if strategies.is_empty() {
            return Err(PipelineError::Usage("no strategies given".into()));
        }
        self.llm()?;
        let jobs: Vec<(&Task, &Bug, StrategyKind)> =
            bugs.iter().flat_map(|&(t, b)| strategies.iter().map(move |&s| (t, b, s))).collect();
        let results = parallel_map(&jobs, self.cfg.parallelism, |&(t, b, s)| {
            (format!("{}/{s}", key(t, b)), self.repair_one(t, b, s, mode))
        });
        Ok(Batch::collect(results))
    }

    /// Aggregate every record in the run directory and write the reports.
    pub fn write_reports(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let mut reductions = Vec::new();
        for path in json_files(&self.run_dir.join("reduced"), 1) {
            if let Some(rec) = read_json::<ReductionRecord>(&path) {
                reductions.push(ReductionRow::new(&rec.task_id, &rec.bug_id, rec.difficulty, &rec.summary));
            }
        }
        let mut repairs = Vec::new();
        for path in json_files(&self.run_dir.join("repair"), 2) {
            if let Some(rec) = read_json::<RepairRecord>(&path) {
                repairs.push(rec);
            }
        }
        let ledger = match fs::read_to_string(self.ledger_path()) {
            Ok(text) => UsageLedger::from_jsonl(&text).map_err(PipelineError::Environment)?,
            Err(_) => UsageLedger::default(),
        };
        let summary = cost(&ledger, &self.cfg.pricing_table()).map_err(|e| PipelineError::Usage(e.to_string()))?;
        let report = build_report(self.cfg.repair.samples, &self.cfg.repair.ks, reductions, &repairs, summary);
        export_reports(&report, &self.run_dir.join("reports")).map_err(env_err("writing reports"))
    }

    /// Reduce, repair under every configured strategy, and export reports.
    pub fn eval(&self, sel: &Selector) -> Result<EvalOutcome, PipelineError> {
        let reduced = self.reduce(sel, self.cfg.reduce.engine, true)?;
        let repaired = self.repair(sel, &self.cfg.repair.strategies.clone(), self.cfg.repair.mode)?;
        let reports = self.write_reports()?;
        Ok((reduced, repaired, reports))
    }

    /// Check that each reference passes its own suite and each failing
    /// input really separates reference and buggy program.
    pub fn verify(&self, sel: &Selector) -> Result<Batch<VerifyRow>, PipelineError> {
        let bugs = self.selected(sel)?;
        let results = parallel_map(&bugs, self.cfg.parallelism, |&(t, b)| {
            let row = (|| -> Result<VerifyRow, String> {
                let p = self.prepare(t, b)?;
                let expected = self.expected_for(t)?;
                let v = validate_patch(&t.reference_source, t, &expected, &self.cfg.toolchain, self.cfg.reduce.comparison)
                    .map_err(|e| e.to_string())?;
                let judged = p.oracle.judge(&p.i0).map_err(|e| e.to_string())?;
                Ok(VerifyRow {
                    task_id: t.id.clone(),
                    bug_id: b.id.clone(),
                    reference_passes: v.verdict.is_pass(),
                    failing_input_interesting: judged.interesting,
                    detail: format!("reference: {}; failing input: {:?}", v.verdict.describe(), judged.reason),
                })
            })();
            (key(t, b), row)
        });
        Ok(Batch::collect(results))
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(&self.tasks)
    }
}

pub fn corpus_stats(tasks: &[Task]) -> CorpusStats {
    let mut rows = Vec::new();
    let groups = Difficulty::ALL.into_iter().map(Some).chain(std::iter::once(None));
    for d in groups {
        let sel: Vec<&Task> = tasks.iter().filter(|t| d.is_none_or(|d| t.difficulty == d)).collect();
        let label = d.map_or("Overall".to_string(), |d| d.to_string());
        let bugs = sel.iter().map(|t| t.bugs.len()).sum();
        let stats: Vec<_> = sel.iter().map(|t| task_stats(t)).collect();
        rows.push((
            label,
            sel.len(),
            bugs,
            stats.iter().map(|s| s.test_count).sum(),
            stats.iter().map(|s| s.total_bytes).sum(),
        ));
    }
    CorpusStats { rows, median_failing_input_bytes: median_failing_input_bytes(tasks) }
}

fn no_reducer(task_id: &str) -> String {
    format!("no cached reducer for task {task_id}; run `shrinkfix gen-reducer --task {task_id}` first")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Option<T> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(value).map_err(io::Error::other)? + "\n")?;
    fs::rename(tmp, path)
}

/// `*.json` files exactly `depth` directories below `root`, sorted.
fn json_files(root: &Path, depth: usize) -> Vec<PathBuf> {
    let mut level = vec![root.to_path_buf()];
    for _ in 0..depth {
        level = level
            .iter()
            .filter_map(|d| fs::read_dir(d).ok())
            .flat_map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()))
            .collect();
    }
    let mut files: Vec<PathBuf> = level
        .iter()
        .filter_map(|d| fs::read_dir(d).ok())
        .flat_map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}
