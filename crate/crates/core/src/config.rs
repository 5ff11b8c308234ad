//! Run configuration, loaded from TOML.
//!
//! ```
//! use shrinkfix_core::config::RunConfig;
//! let cfg: RunConfig = toml::from_str(r#"
//!     corpus = "corpus"
//!     [repair]
//!     samples = 5
//!     strategies = ["baseline", "reduced_test"]
//! "#).unwrap();
//! assert_eq!(cfg.repair.samples, 5);
//! assert_eq!(cfg.reduce.budget_secs, 60.0);
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{HttpConfig, PricingTable};
use crate::oracle::Comparison;
use crate::reducer::UnitKind;
use crate::repair::StrategyKind;
use crate::runner::ToolchainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: Backend,
    /// JSON array of scripted replies for the mock backend.
    pub mock_script: Option<PathBuf>,
    pub http: HttpConfig,
    /// Model used for repair.
    pub model: String,
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: Backend::Mock,
            mock_script: None,
            http: HttpConfig::default(),
            model: "qwen2.5-coder-7b-instruct".into(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Ddmin,
    External,
    PureLlm,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Ddmin => "ddmin",
            Engine::External => "external",
            Engine::PureLlm => "pure-llm",
        })
    }
}

impl FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ddmin" => Ok(Engine::Ddmin),
            "external" => Ok(Engine::External),
            "pure-llm" | "pure_llm" => Ok(Engine::PureLlm),
            other => Err(format!("unknown engine {other:?} (ddmin, external, pure-llm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceConfig {
    pub engine: Engine,
    pub budget_secs: f64,
    pub unit: UnitKind,
    pub keep_best_on_timeout: bool,
    /// Command prefix used to run reducer scripts.
    pub interpreter: String,
    /// Parse-only check for generated scripts; `{script}` is the path.
    pub validation_command: Option<String>,
    pub comparison: Comparison,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        ReduceConfig {
            engine: Engine::Ddmin,
            budget_secs: 60.0,
            unit: UnitKind::Line,
            keep_best_on_timeout: false,
            interpreter: "python3".into(),
            validation_command: None,
            comparison: Comparison::Lenient,
        }
    }
}

impl ReduceConfig {
    pub fn budget(&self) -> Duration {
        Duration::from_secs_f64(self.budget_secs)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    #[default]
    Single,
    Conversational,
}

impl FromStr for RepairMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(RepairMode::Single),
            "conversational" | "chat" => Ok(RepairMode::Conversational),
            other => Err(format!("unknown repair mode {other:?} (single, conversational)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    pub strategies: Vec<StrategyKind>,
    pub samples: usize,
    pub temperature: f64,
    pub line_budget: usize,
    pub diff_line_cap: usize,
    pub mode: RepairMode,
    pub max_retry: usize,
    pub window: usize,
    /// k values reported for pass@k.
    pub ks: Vec<usize>,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            strategies: vec![StrategyKind::Baseline, StrategyKind::OriginTest, StrategyKind::ReducedTest],
            samples: 10,
            temperature: 0.8,
            line_budget: 100,
            diff_line_cap: 10,
            mode: RepairMode::Single,
            max_retry: 1,
            window: 2,
            ks: vec![1, 5, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducerGenConfig {
    /// Model for reducer generation and the pure-LLM baseline.
    pub model: String,
}

impl Default for ReducerGenConfig {
    fn default() -> Self {
        ReducerGenConfig { model: "qwen-plus".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    pub run_id: Option<String>,
    /// Recorded in the run snapshot; nothing is randomized by it.
    pub seed: u64,
    pub parallelism: usize,
    pub toolchain: ToolchainConfig,
    pub llm: LlmConfig,
    /// Entries override the built-in price list.
    pub pricing: PricingTable,
    pub reduce: ReduceConfig,
    pub repair: RepairConfig,
    pub reducergen: ReducerGenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus"),
            output_dir: PathBuf::from("out"),
            run_id: None,
            seed: 0,
            parallelism: 4,
            toolchain: ToolchainConfig::default(),
            llm: LlmConfig::default(),
            pricing: PricingTable(Default::default()),
            reduce: ReduceConfig::default(),
            repair: RepairConfig::default(),
            reducergen: ReducerGenConfig::default(),
        }
    }
}

impl RunConfig {
    /// Read a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output_dir);
        if let Some(m) = self.llm.mock_script.as_mut() {
            fix(m);
        }
    }

    /// Built-in prices with this config's entries layered on top.
    pub fn pricing_table(&self) -> PricingTable {
        let mut table = PricingTable::default();
        for (model, price) in &self.pricing.0 {
            table.insert(model.clone(), *price);
        }
        table
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.repair.samples == 0 {
            return bad("repair.samples must be at least 1".into());
        }
        if self.reduce.budget_secs.is_nan() || self.reduce.budget_secs <= 0.0 {
            return bad("reduce.budget_secs must be positive".into());
        }
        if self.repair.line_budget < 2 {
            return bad("repair.line_budget must be at least 2".into());
        }
        if self.repair.temperature.is_nan() || self.repair.temperature < 0.0 {
            return bad("repair.temperature must be non-negative".into());
        }
        if self.repair.window == 0 {
            return bad("repair.window must be at least 1".into());
        }
        if let Some(k) = self.repair.ks.iter().find(|&&k| k == 0 || k > self.repair.samples) {
            return bad(format!("pass@k value {k} outside 1..={}", self.repair.samples));
        }
        if self.repair.strategies.is_empty() {
            return bad("repair.strategies is empty".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if !self.corpus.is_dir() {
            return bad(format!("corpus directory {} does not exist", self.corpus.display()));
        }
        if self.llm.backend == Backend::Mock {
            if let Some(p) = &self.llm.mock_script {
                if !p.is_file() {
                    return bad(format!("mock script {} does not exist", p.display()));
                }
            }
        }
        self.toolchain.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
