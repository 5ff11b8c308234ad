use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shrinkfix_core::config::{Backend, Engine, RepairMode, RunConfig};
use shrinkfix_core::pipeline::{Batch, PipelineError, Selector, Session};
use shrinkfix_core::reducer::UnitKind;
use shrinkfix_core::repair::StrategyKind;

/// Shrink failure-inducing inputs and repair buggy submissions with an LLM.
#[derive(Debug, Parser)]
#[command(name = "shrinkfix", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Reuse a run directory; completed bugs are skipped.
    #[arg(long, global = true)]
    run_id: Option<String>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Scripted replies (JSON); selects the mock backend.
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    /// Use the HTTP backend (key in RF_API_KEY).
    #[arg(long, global = true, conflicts_with = "mock_script")]
    live: bool,
    /// Repair model.
    #[arg(long, global = true)]
    model: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct SelectArgs {
    /// Task id; repeatable.
    #[arg(long = "task")]
    tasks: Vec<String>,
    /// Bug id or task/bug; repeatable.
    #[arg(long = "bug")]
    bugs: Vec<String>,
}

impl SelectArgs {
    fn selector(&self) -> Selector {
        Selector { tasks: self.tasks.clone(), bugs: self.bugs.clone() }
    }
}

#[derive(Debug, Args, Clone, Default)]
struct ReduceArgs {
    #[arg(long)]
    engine: Option<Engine>,
    #[arg(long)]
    budget_secs: Option<f64>,
    /// line, byte or whitespace-token.
    #[arg(long)]
    unit: Option<UnitKind>,
    /// On timeout keep the smallest failing input found so far.
    #[arg(long)]
    keep_best: bool,
}

#[derive(Debug, Args, Clone, Default)]
struct RepairArgs {
    /// Comma-separated or repeated.
    #[arg(long = "strategy", value_delimiter = ',')]
    strategies: Vec<StrategyKind>,
    #[arg(long)]
    mode: Option<RepairMode>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    line_budget: Option<usize>,
    #[arg(long)]
    max_retry: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reduce failing inputs.
    Reduce {
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        reduce: ReduceArgs,
    },
    /// Generate and cache one reducer script per task.
    GenReducer {
        #[command(flatten)]
        select: SelectArgs,
    },
    /// Sample and validate patches.
    Repair {
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        repair: RepairArgs,
    },
    /// Reduce, repair under every strategy, and write reports.
    Eval {
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        reduce: ReduceArgs,
        #[command(flatten)]
        repair: RepairArgs,
    },
    /// Print corpus statistics.
    Stats,
    /// Check that references pass and failing inputs really fail.
    VerifyBug {
        #[command(flatten)]
        select: SelectArgs,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| PipelineError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cli.corpus {
        cfg.corpus = c.clone();
    }
    if let Some(o) = &cli.output_dir {
        cfg.output_dir = o.clone();
    }
    if let Some(r) = &cli.run_id {
        cfg.run_id = Some(r.clone());
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    if let Some(m) = &cli.mock_script {
        cfg.llm.backend = Backend::Mock;
        cfg.llm.mock_script = Some(m.clone());
    }
    if cli.live {
        cfg.llm.backend = Backend::Live;
    }
    if let Some(m) = &cli.model {
        cfg.llm.model = m.clone();
    }
    match &cli.command {
        Command::Reduce { reduce, .. } => apply_reduce(&mut cfg, reduce),
        Command::Repair { repair, .. } => apply_repair(&mut cfg, repair),
        Command::Eval { reduce, repair, .. } => {
            apply_reduce(&mut cfg, reduce);
            apply_repair(&mut cfg, repair);
        }
        _ => {}
    }
    Ok(cfg)
}

fn apply_reduce(cfg: &mut RunConfig, a: &ReduceArgs) {
    let r = &mut cfg.reduce;
    if let Some(e) = a.engine {
        r.engine = e;
    }
    if let Some(b) = a.budget_secs {
        r.budget_secs = b;
    }
    if let Some(u) = a.unit {
        r.unit = u;
    }
    r.keep_best_on_timeout |= a.keep_best;
}

fn apply_repair(cfg: &mut RunConfig, a: &RepairArgs) {
    let r = &mut cfg.repair;
    if !a.strategies.is_empty() {
        r.strategies = a.strategies.clone();
    }
    if let Some(m) = a.mode {
        r.mode = m;
    }
    if let Some(n) = a.samples {
        r.samples = n;
        r.ks.retain(|&k| k <= n);
        if r.ks.is_empty() {
            r.ks.push(n);
        }
    }
    if let Some(t) = a.temperature {
        r.temperature = t;
    }
    if let Some(l) = a.line_budget {
        r.line_budget = l;
    }
    if let Some(m) = a.max_retry {
        r.max_retry = m;
    }
    if let Some(w) = a.window {
        r.window = w;
    }
}

/// Print failures and map them to the environment-error exit status.
fn finish<T>(batch: &Batch<T>) -> Result<(), PipelineError> {
    for (key, why) in &batch.failures {
        eprintln!("FAILED {key}: {why}");
    }
    match batch.failures.len() {
        0 => Ok(()),
        n => Err(PipelineError::Environment(format!("{n} item(s) failed"))),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = build_config(&cli)?;
    if let Command::Stats = cli.command {
        let tasks = shrinkfix_core::corpus::load_corpus(&cfg.corpus).map_err(|e| PipelineError::Usage(e.to_string()))?;
        print!("{}", shrinkfix_core::pipeline::corpus_stats(&tasks));
        return Ok(());
    }
    let session = Session::open(cfg)?;
    println!("run {} in {}", session.run_id, session.run_dir.display());
    match &cli.command {
        Command::Reduce { select, .. } => {
            let batch = session.reduce(&select.selector(), session.cfg.reduce.engine, false)?;
            for r in &batch.done {
                let s = &r.summary;
                println!(
                    "{}/{}: {} {} -> {} bytes, rate {:.4}, {} candidates",
                    r.task_id, r.bug_id, s.status, s.original_bytes, s.reduced_bytes, s.compression_rate, s.candidates_tried
                );
            }
            finish(&batch)
        }
        Command::GenReducer { select } => {
            let batch = session.gen_reducers(&select.selector())?;
            for (task, path) in &batch.done {
                println!("{task}: {}", path.display());
            }
            finish(&batch)
        }
        Command::Repair { select, .. } => {
            let rc = &session.cfg.repair;
            let batch = session.repair(&select.selector(), &rc.strategies, rc.mode)?;
            for r in &batch.done {
                let run = &r.run;
                let fixed = run.fixed_at.map_or("-".to_string(), |k| k.to_string());
                println!("{}/{} {}: fixed_at {fixed} ({} samples)", run.task_id, run.bug_id, run.strategy, run.samples.len());
            }
            finish(&batch)?;
            for p in session.write_reports()? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Eval { select, .. } => {
            let (reduced, repaired, reports) = session.eval(&select.selector())?;
            println!("{} reductions, {} repair runs", reduced.done.len(), repaired.done.len());
            for p in reports {
                println!("wrote {}", p.display());
            }
            finish(&reduced)?;
            finish(&repaired)
        }
        Command::VerifyBug { select } => {
            let batch = session.verify(&select.selector())?;
            let mut bad = 0;
            for r in &batch.done {
                let ok = r.reference_passes && r.failing_input_interesting;
                bad += usize::from(!ok);
                println!("{} {}/{}: {}", if ok { "ok  " } else { "BAD " }, r.task_id, r.bug_id, r.detail);
            }
            finish(&batch)?;
            if bad > 0 {
                return Err(PipelineError::Usage(format!("{bad} bug(s) failed verification")));
            }
            Ok(())
        }
        Command::Stats => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
