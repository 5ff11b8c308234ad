//! On-disk benchmark format: a `corpus.json` manifest that references the
//! statement, reference solution, test inputs/outputs and buggy submissions
//! of each task as files relative to the manifest.
//!
//! ```json
//! { "tasks": [ { "id": "abc376c", "difficulty": "C",
//!                "statement_path": "abc376c/statement.md",
//!                "reference_path": "abc376c/reference.cpp",
//!                "tests": [ { "id": "01", "input_path": "abc376c/in/01.txt",
//!                             "output_path": "abc376c/out/01.txt" } ],
//!                "bugs": [ { "id": "65060141", "source_path": "abc376c/bugs/65060141.cpp",
//!                            "failing_input_id": "01", "metadata": { "date": "2024-10-19" } } ] } ] }
//! ```
//!
//! Test payloads are never inlined into memory at load time; they stay as
//! files and are streamed to the program under test.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_NAME: &str = "corpus.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no {MANIFEST_NAME} in {0}")]
    ManifestMissing(PathBuf),
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn violation(path: impl Into<String>, reason: impl Into<String>) -> CorpusError {
    CorpusError::SchemaViolation {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    C,
    D,
    EF,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::C, Difficulty::D, Difficulty::EF];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::C => "C",
            Difficulty::D => "D",
            Difficulty::EF => "EF",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C" => Ok(Difficulty::C),
            "D" => Ok(Difficulty::D),
            "EF" => Ok(Difficulty::EF),
            other => Err(format!("unknown difficulty {other:?} (expected C, D or EF)")),
        }
    }
}

/// Test payload: either a file on disk or bytes held in memory.
#[derive(Debug, Clone)]
pub enum Payload {
    File { path: PathBuf, len: u64 },
    Inline(Arc<Vec<u8>>),
}

impl Payload {
    pub fn inline(bytes: impl Into<Vec<u8>>) -> Self {
        Payload::Inline(Arc::new(bytes.into()))
    }

    pub fn from_file(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let meta = fs::metadata(&path)?;
        if !meta.is_file() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a regular file"));
        }
        // Readability check without loading the payload.
        fs::File::open(&path)?;
        Ok(Payload::File {
            path,
            len: meta.len(),
        })
    }

    pub fn len(&self) -> u64 {
        match self {
            Payload::File { len, .. } => *len,
            Payload::Inline(b) => b.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read(&self) -> io::Result<Cow<'_, [u8]>> {
        match self {
            Payload::File { path, .. } => fs::read(path).map(Cow::Owned),
            Payload::Inline(b) => Ok(Cow::Borrowed(b.as_slice())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestCase {
    pub id: String,
    pub input: Payload,
    /// When absent, the reference solution's output is the expected output.
    pub expected_output: Option<Payload>,
}

#[derive(Debug, Clone)]
pub struct Bug {
    pub id: String,
    pub buggy_source: String,
    pub failing_input_id: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub difficulty: Difficulty,
    pub statement: String,
    pub reference_source: String,
    pub tests: Vec<TestCase>,
    pub bugs: Vec<Bug>,
}

impl Task {
    pub fn test(&self, id: &str) -> Option<&TestCase> {
        self.tests.iter().find(|t| t.id == id)
    }

    pub fn bug(&self, id: &str) -> Option<&Bug> {
        self.bugs.iter().find(|b| b.id == id)
    }

    /// The failure-inducing input of `bug`.
    pub fn failing_input(&self, bug: &Bug) -> Option<&Payload> {
        self.test(&bug.failing_input_id).map(|t| &t.input)
    }

    /// First `# ` heading of the statement, or the task id.
    pub fn title(&self) -> &str {
        markdown_title(&self.statement).unwrap_or(&self.id)
    }
}

pub(crate) fn markdown_title(md: &str) -> Option<&str> {
    md.lines()
        .find_map(|l| l.strip_prefix("# "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    pub test_count: usize,
    pub max_test_bytes: u64,
    pub total_bytes: u64,
}

pub fn task_stats(task: &Task) -> TaskStats {
    TaskStats {
        test_count: task.tests.len(),
        max_test_bytes: task.tests.iter().map(|t| t.input.len()).max().unwrap_or(0),
        total_bytes: task.tests.iter().map(|t| t.input.len()).sum(),
    }
}

/// Median size in bytes of the failure-inducing inputs across all bugs
/// (midpoint average for an even count). `None` for a corpus without bugs.
pub fn median_failing_input_bytes(tasks: &[Task]) -> Option<f64> {
    let mut sizes: Vec<u64> = tasks
        .iter()
        .flat_map(|t| t.bugs.iter().filter_map(move |b| t.failing_input(b)))
        .map(Payload::len)
        .collect();
    if sizes.is_empty() {
        return None;
    }
    sizes.sort_unstable();
    let n = sizes.len();
    Some(if n % 2 == 1 {
        sizes[n / 2] as f64
    } else {
        (sizes[n / 2 - 1] as f64 + sizes[n / 2] as f64) / 2.0
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    tasks: Vec<TaskEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    id: String,
    difficulty: String,
    statement_path: String,
    reference_path: String,
    tests: Vec<TestEntry>,
    bugs: Vec<BugEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestEntry {
    id: String,
    input_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BugEntry {
    id: String,
    source_path: String,
    failing_input_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, serde_json::Value>,
}

fn resolve(root: &Path, rel: &str, at: &str) -> Result<PathBuf, CorpusError> {
    let p = Path::new(rel);
    if rel.is_empty() || p.is_absolute() {
        return Err(violation(at, "path must be non-empty and relative to the manifest"));
    }
    Ok(root.join(p))
}

fn read_text(root: &Path, rel: &str, at: &str) -> Result<String, CorpusError> {
    let path = resolve(root, rel, at)?;
    fs::read_to_string(&path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            CorpusError::DanglingReference(format!("{at}: {rel} does not exist"))
        } else {
            CorpusError::Io { path, source }
        }
    })
}

fn payload(root: &Path, rel: &str, at: &str) -> Result<Payload, CorpusError> {
    let path = resolve(root, rel, at)?;
    Payload::from_file(&path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            CorpusError::DanglingReference(format!("{at}: {rel} does not exist"))
        } else {
            CorpusError::Io { path, source }
        }
    })
}

/// Load and eagerly validate every task listed in `<root>/corpus.json`.
pub fn load_corpus(root: &Path) -> Result<Vec<Task>, CorpusError> {
    let manifest_path = root.join(MANIFEST_NAME);
    let text = match fs::read_to_string(&manifest_path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CorpusError::ManifestMissing(root.to_path_buf()))
        }
        Err(source) => {
            return Err(CorpusError::Io {
                path: manifest_path,
                source,
            })
        }
    };
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| violation(MANIFEST_NAME, e.to_string()))?;

    let mut seen_tasks = HashSet::new();
    let mut tasks = Vec::with_capacity(manifest.tasks.len());
    for (ti, entry) in manifest.tasks.into_iter().enumerate() {
        let at = format!("tasks[{ti}]");
        if entry.id.is_empty() {
            return Err(violation(format!("{at}.id"), "empty task id"));
        }
        if !seen_tasks.insert(entry.id.clone()) {
            return Err(violation(format!("{at}.id"), format!("duplicate task id {:?}", entry.id)));
        }
        let difficulty: Difficulty = entry
            .difficulty
            .parse()
            .map_err(|e| violation(format!("{at}.difficulty"), e))?;
        if entry.tests.is_empty() {
            return Err(violation(format!("{at}.tests"), "task has no tests"));
        }
        let statement = read_text(root, &entry.statement_path, &format!("{at}.statement_path"))?;
        let reference_source =
            read_text(root, &entry.reference_path, &format!("{at}.reference_path"))?;

        let mut seen_tests = HashSet::new();
        let mut tests = Vec::with_capacity(entry.tests.len());
        for (i, t) in entry.tests.into_iter().enumerate() {
            let tat = format!("{at}.tests[{i}]");
            if t.id.is_empty() || !seen_tests.insert(t.id.clone()) {
                return Err(violation(format!("{tat}.id"), "test id empty or duplicated"));
            }
            let input = payload(root, &t.input_path, &format!("{tat}.input_path"))?;
            let expected_output = t
                .output_path
                .as_deref()
                .map(|p| payload(root, p, &format!("{tat}.output_path")))
                .transpose()?;
            tests.push(TestCase {
                id: t.id,
                input,
                expected_output,
            });
        }

        let mut seen_bugs = HashSet::new();
        let mut bugs = Vec::with_capacity(entry.bugs.len());
        for (i, b) in entry.bugs.into_iter().enumerate() {
            let bat = format!("{at}.bugs[{i}]");
            if b.id.is_empty() || !seen_bugs.insert(b.id.clone()) {
                return Err(violation(format!("{bat}.id"), "bug id empty or duplicated"));
            }
            if !seen_tests.contains(&b.failing_input_id) {
                return Err(CorpusError::DanglingReference(format!(
                    "{bat}.failing_input_id: no test {:?} in task {:?}",
                    b.failing_input_id, entry.id
                )));
            }
            let buggy_source = read_text(root, &b.source_path, &format!("{bat}.source_path"))?;
            if buggy_source.trim().is_empty() {
                return Err(violation(format!("{bat}.source_path"), "buggy source is empty"));
            }
            bugs.push(Bug {
                id: b.id,
                buggy_source,
                failing_input_id: b.failing_input_id,
                metadata: b.metadata,
            });
        }

        tasks.push(Task {
            id: entry.id,
            difficulty,
            statement,
            reference_source,
            tests,
            bugs,
        });
    }
    Ok(tasks)
}

/// Write `tasks` as a corpus under `root` (the inverse of [`load_corpus`]).
pub fn write_corpus(root: &Path, tasks: &[Task]) -> Result<(), CorpusError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let write = |rel: &str, bytes: &[u8]| -> Result<(), CorpusError> {
        let path = root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))
    };

    let mut entries = Vec::with_capacity(tasks.len());
    for (ti, task) in tasks.iter().enumerate() {
        let dir = format!("t{ti:04}");
        let statement_path = format!("{dir}/statement.md");
        let reference_path = format!("{dir}/reference.src");
        write(&statement_path, task.statement.as_bytes())?;
        write(&reference_path, task.reference_source.as_bytes())?;
        let mut tests = Vec::with_capacity(task.tests.len());
        for (i, t) in task.tests.iter().enumerate() {
            let input_path = format!("{dir}/tests/{i:04}.in");
            let bytes = t.input.read().map_err(io_err(Path::new(&input_path)))?;
            write(&input_path, &bytes)?;
            let output_path = match &t.expected_output {
                Some(out) => {
                    let p = format!("{dir}/tests/{i:04}.out");
                    let bytes = out.read().map_err(io_err(Path::new(&p)))?;
                    write(&p, &bytes)?;
                    Some(p)
                }
                None => None,
            };
            tests.push(TestEntry {
                id: t.id.clone(),
                input_path,
                output_path,
            });
        }
        let mut bugs = Vec::with_capacity(task.bugs.len());
        for (i, b) in task.bugs.iter().enumerate() {
            let source_path = format!("{dir}/bugs/{i:04}.src");
            write(&source_path, b.buggy_source.as_bytes())?;
            bugs.push(BugEntry {
                id: b.id.clone(),
                source_path,
                failing_input_id: b.failing_input_id.clone(),
                metadata: b.metadata.clone(),
            });
        }
        entries.push(TaskEntry {
            id: task.id.clone(),
            difficulty: task.difficulty.as_str().to_string(),
            statement_path,
            reference_path,
            tests,
            bugs,
        });
    }
    let manifest = serde_json::to_vec_pretty(&Manifest { tasks: entries })
        .map_err(|e| violation(MANIFEST_NAME, e.to_string()))?;
    write(MANIFEST_NAME, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(root: &Path, rel: &str, body: &[u8]) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, body).unwrap();
    }

    fn fixture(root: &Path, manifest: &str) {
        write(root, "s.md", b"# Sum\nAdd numbers.");
        write(root, "ref.sh", b"awk '{s+=$1} END {print s+0}'");
        write(root, "bug.sh", b"head -n 1");
        write(root, "in/1", b"1\n2\n");
        write(root, "in/2", b"3\n");
        write(root, "out/1", b"3\n");
        write(root, MANIFEST_NAME, manifest.as_bytes());
    }

    const GOOD: &str = r#"{"tasks":[{"id":"sum","difficulty":"C","statement_path":"s.md",
        "reference_path":"ref.sh","tests":[{"id":"1","input_path":"in/1","output_path":"out/1"},
        {"id":"2","input_path":"in/2"}],"bugs":[{"id":"b1","source_path":"bug.sh",
        "failing_input_id":"1","metadata":{"submission":"42"}}]}]}"#;

    #[test]
    fn loads_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), GOOD);
        let tasks = load_corpus(dir.path()).unwrap();
        assert_eq!(tasks.len(), 1);
        let t = &tasks[0];
        assert_eq!(t.tests.len(), 2);
        assert_eq!(t.bugs.len(), 1);
        assert_eq!(t.tests[0].id, "1");
        assert!(t.tests[1].expected_output.is_none());
        assert_eq!(t.title(), "Sum");
        assert_eq!(&*t.failing_input(&t.bugs[0]).unwrap().read().unwrap(), b"1\n2\n");
        assert_eq!(t.bugs[0].metadata["submission"], "42");
    }

    #[test]
    fn dangling_failing_input() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &GOOD.replace(r#""failing_input_id":"1""#, r#""failing_input_id":"9""#));
        assert!(matches!(
            load_corpus(dir.path()),
            Err(CorpusError::DanglingReference(_))
        ));
    }

    #[test]
    fn missing_file_is_dangling() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &GOOD.replace("in/2", "in/404"));
        assert!(matches!(
            load_corpus(dir.path()),
            Err(CorpusError::DanglingReference(_))
        ));
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(dir.path()),
            Err(CorpusError::ManifestMissing(_))
        ));
    }

    #[test]
    fn unknown_difficulty_and_fields() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &GOOD.replace(r#""difficulty":"C""#, r#""difficulty":"B""#));
        match load_corpus(dir.path()) {
            Err(CorpusError::SchemaViolation { path, .. }) => assert_eq!(path, "tasks[0].difficulty"),
            other => panic!("{other:?}"),
        }
        fixture(dir.path(), &GOOD.replace(r#""id":"sum","#, r#""id":"sum","extra":1,"#));
        assert!(matches!(
            load_corpus(dir.path()),
            Err(CorpusError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn structural_violations() {
        let dir = tempfile::tempdir().unwrap();
        let no_tests = r#"{"tasks":[{"id":"sum","difficulty":"C","statement_path":"s.md",
            "reference_path":"ref.sh","tests":[],"bugs":[]}]}"#;
        fixture(dir.path(), no_tests);
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::SchemaViolation { .. })));
        let dup = format!(r#"{{"tasks":[{t},{t}]}}"#, t = &GOOD[10..GOOD.len() - 2]);
        fixture(dir.path(), &dup);
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::SchemaViolation { .. })));
        fixture(dir.path(), &GOOD.replace(r#""id":"sum""#, r#""id":"""#));
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::SchemaViolation { .. })));
    }

    #[test]
    fn stats() {
        let task = Task {
            id: "t".into(),
            difficulty: Difficulty::D,
            statement: "x".into(),
            reference_source: "x".into(),
            tests: vec![
                TestCase { id: "a".into(), input: Payload::inline(b"abc".to_vec()), expected_output: None },
                TestCase { id: "b".into(), input: Payload::inline(b"abcde".to_vec()), expected_output: None },
            ],
            bugs: vec![],
        };
        let s = task_stats(&task);
        assert_eq!((s.test_count, s.max_test_bytes, s.total_bytes), (2, 5, 8));
        let empty = Task {
            tests: vec![TestCase { id: "e".into(), input: Payload::inline(Vec::new()), expected_output: None }],
            ..task
        };
        let s = task_stats(&empty);
        assert_eq!((s.max_test_bytes, s.total_bytes), (0, 0));
    }

    fn arb_task() -> impl Strategy<Value = Task> {
        let test = (
            proptest::collection::vec(any::<u8>(), 0..64),
            proptest::option::of(proptest::collection::vec(any::<u8>(), 0..16)),
        );
        (
            "[a-z]{1,8}",
            prop_oneof![Just(Difficulty::C), Just(Difficulty::D), Just(Difficulty::EF)],
            ".{1,40}",
            ".{1,40}",
            proptest::collection::vec(test, 1..4),
            proptest::collection::vec(("[ -~]{1,20}", "[a-z]{0,4}"), 0..3),
        )
            .prop_map(|(id, difficulty, statement, reference_source, tests, bugs)| {
                let tests: Vec<TestCase> = tests
                    .into_iter()
                    .enumerate()
                    .map(|(i, (input, out))| TestCase {
                        id: format!("case{i}"),
                        input: Payload::inline(input),
                        expected_output: out.map(Payload::inline),
                    })
                    .collect();
                let n = tests.len();
                let bugs = bugs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (src, meta))| Bug {
                        id: format!("bug{i}"),
                        buggy_source: src,
                        failing_input_id: format!("case{}", i % n),
                        metadata: if meta.is_empty() {
                            BTreeMap::new()
                        } else {
                            BTreeMap::from([("note".to_string(), serde_json::Value::from(meta))])
                        },
                    })
                    .collect();
                Task { id, difficulty, statement, reference_source, tests, bugs }
            })
    }

    fn same(a: &Task, b: &Task) -> bool {
        let payload_eq = |x: &Payload, y: &Payload| x.read().unwrap() == y.read().unwrap();
        a.id == b.id
            && a.difficulty == b.difficulty
            && a.statement == b.statement
            && a.reference_source == b.reference_source
            && a.tests.len() == b.tests.len()
            && a.tests.iter().zip(&b.tests).all(|(x, y)| {
                x.id == y.id
                    && payload_eq(&x.input, &y.input)
                    && match (&x.expected_output, &y.expected_output) {
                        (None, None) => true,
                        (Some(p), Some(q)) => payload_eq(p, q),
                        _ => false,
                    }
            })
            && a.bugs.len() == b.bugs.len()
            && a.bugs.iter().zip(&b.bugs).all(|(x, y)| {
                x.id == y.id
                    && x.buggy_source == y.buggy_source
                    && x.failing_input_id == y.failing_input_id
                    && x.metadata == y.metadata
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_then_load_round_trips(tasks in proptest::collection::vec(arb_task(), 0..3)) {
            let mut tasks = tasks;
            for (i, t) in tasks.iter_mut().enumerate() {
                t.id = format!("{}{i}", t.id);
                for b in &mut t.bugs {
                    if b.buggy_source.trim().is_empty() { b.buggy_source = "x".into(); }
                }
            }
            let dir = tempfile::tempdir().unwrap();
            write_corpus(dir.path(), &tasks).unwrap();
            let loaded = load_corpus(dir.path()).unwrap();
            prop_assert_eq!(loaded.len(), tasks.len());
            for (a, b) in tasks.iter().zip(&loaded) {
                prop_assert!(same(a, b));
            }
        }
    }
}
