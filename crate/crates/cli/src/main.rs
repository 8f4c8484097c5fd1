//! Command line front end: generate instruction datasets, run backends over
//! them, score the resulting traces, and poke at the simulated world
//! interactively.
//!
//! Exit codes: 0 when the requested work succeeded end to end (for `run`,
//! that means every session completed), 1 on runtime failures or incomplete
//! runs, 2 on command line errors.

use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use viot_core::agent::{run_batch, run_session, SessionConfig, SessionOutcome, ViolationPolicy, DEFAULT_MAX_STEPS};
use viot_core::backend::{
    CompletionBackend, CorruptionConfig, EndpointBackend, FormatBreaker, KeywordRouter,
    ScriptedBackend,
};
use viot_core::dataset::{
    builtin_templates, export_sft, generate, read_dataset_file, split, write_dataset_file,
    GenConfig, Pool,
};
use viot_core::eval::{render_csv, render_markdown, score, EvalOptions};
use viot_core::knowledge::KnowledgeBase;
use viot_core::prompt::Query;
use viot_core::react_format::{read_trace_file, write_trace_file, Action, ParseMode, Trace};
use viot_core::tools::canonical_registry;
use viot_core::{REGISTRY_VERSION, SCHEMA_VERSION};

fn version_line() -> String {
    format!(
        "{} (registry v{REGISTRY_VERSION}, schema v{SCHEMA_VERSION})",
        env!("CARGO_PKG_VERSION"),
    )
}

#[derive(Parser)]
#[command(name = "viot", version = version_line(), about = "Tool-scheduling agent runtime and benchmark harness for a simulated camera network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instruction dataset (and optionally SFT pairs).
    Gen(GenArgs),
    /// Run a completion backend over a dataset, writing traces.
    Run(RunArgs),
    /// Score a trace file against its dataset.
    Score(ScoreArgs),
    /// Ask ad-hoc questions against the simulated world.
    Repl(ReplArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolArg {
    Trainval,
    Test,
}

impl From<PoolArg> for Pool {
    fn from(pool: PoolArg) -> Pool {
        match pool {
            PoolArg::Trainval => Pool::TrainVal,
            PoolArg::Test => Pool::Test,
        }
    }
}

#[derive(clap::Args)]
struct GenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Generation seed (phrasings, locations, subjects).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// World fixture seed.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Records per tool.
    #[arg(long, default_value_t = 10)]
    per_tool: usize,
    /// Records per pipeline.
    #[arg(long, default_value_t = 10)]
    per_pipeline: usize,
    /// Train:val ratio, e.g. 49:1.
    #[arg(long, default_value = "49:1")]
    split: String,
    /// Probability that a query targets something actually present.
    #[arg(long, default_value_t = 0.5)]
    hit_rate: f64,
    /// Which resource pool to draw from (phrasings and locations are
    /// disjoint between the two).
    #[arg(long, value_enum, default_value_t = PoolArg::Trainval)]
    pool: PoolArg,
    /// Also export supervised fine-tuning pairs.
    #[arg(long)]
    sft: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    /// Replays gold schedules, optionally corrupted.
    Scripted,
    /// Emits unparseable prose (scoring floor).
    Breaker,
    /// Talks to an HTTP completion endpoint.
    Endpoint,
}

impl BackendArg {
    fn as_str(self) -> &'static str {
        match self {
            BackendArg::Scripted => "scripted",
            BackendArg::Breaker => "breaker",
            BackendArg::Endpoint => "endpoint",
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Dataset file to run over.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendArg::Scripted)]
    backend: BackendArg,
    /// Completion endpoint URL (or set VIOT_ENDPOINT).
    #[arg(long)]
    endpoint: Option<String>,
    /// Scripted corruption: wrong-decision probability.
    #[arg(long, default_value_t = 0.0)]
    p_decision: f64,
    /// Scripted corruption: wrong-tool probability.
    #[arg(long, default_value_t = 0.0)]
    p_tool: f64,
    /// Scripted corruption: wrong-input probability.
    #[arg(long, default_value_t = 0.0)]
    p_input: f64,
    /// Scripted corruption: wrong-final-answer probability.
    #[arg(long, default_value_t = 0.0)]
    p_final: f64,
    #[arg(long, default_value_t = 0)]
    corruption_seed: u64,
    /// World fixture seed (must match the dataset's).
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,
    /// Parse completions strictly (no whitespace forgiveness).
    #[arg(long)]
    strict: bool,
    /// Re-request a step once after a format violation.
    #[arg(long)]
    retry_violation: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

#[derive(clap::Args)]
struct ScoreArgs {
    /// Dataset file holding the gold schedules.
    #[arg(long)]
    dataset: PathBuf,
    /// Trace file produced by `run`.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    /// Compare byte-exactly instead of forgiving case and spacing.
    #[arg(long)]
    strict: bool,
    /// Also require the final answer text to match.
    #[arg(long)]
    match_final: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReplArgs {
    /// World fixture seed.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Use the tiny two-location demo world instead of the full one.
    #[arg(long)]
    demo: bool,
}

fn parse_ratio(text: &str) -> Result<(u32, u32)> {
    let (train, val) = text
        .split_once(':')
        .with_context(|| format!("split ratio {text:?} is not of the form TRAIN:VAL"))?;
    let train: u32 = train.trim().parse().context("train part of the ratio")?;
    let val: u32 = val.trim().parse().context("val part of the ratio")?;
    if train == 0 || val == 0 {
        bail!("both parts of the split ratio must be positive");
    }
    Ok((train, val))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_manifest(path: &Path, manifest: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let ratio = parse_ratio(&args.split)?;
    let base = KnowledgeBase::default_base(args.base_seed);
    let registry = canonical_registry();
    let templates = builtin_templates();
    let cfg = GenConfig {
        per_tool_count: args.per_tool,
        pipeline_count: args.per_pipeline,
        seed: args.seed,
        split_ratio: ratio,
        hit_rate: args.hit_rate,
        pool: args.pool.into(),
    };
    let records = generate(&base, &registry, &templates, &cfg)?;
    let total = records.len();
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut files = serde_json::Map::new();
    let sft_source;
    match cfg.pool {
        Pool::TrainVal => {
            let (train, val) = split(records, ratio, args.seed);
            write_dataset_file(&train, &args.out.join("train.jsonl"))?;
            write_dataset_file(&val, &args.out.join("val.jsonl"))?;
            files.insert("train.jsonl".into(), train.len().into());
            files.insert("val.jsonl".into(), val.len().into());
            sft_source = train;
        }
        Pool::Test => {
            write_dataset_file(&records, &args.out.join("test.jsonl"))?;
            files.insert("test.jsonl".into(), records.len().into());
            sft_source = records;
        }
    }
    let mut sft_pairs = serde_json::Value::Null;
    if args.sft {
        let pairs = export_sft(&sft_source, &registry, &base, &args.out.join("sft.jsonl"))?;
        files.insert("sft.jsonl".into(), pairs.into());
        sft_pairs = pairs.into();
    }

    write_manifest(
        &args.out.join("manifest.json"),
        &serde_json::json!({
            "command": "gen",
            "registry_version": REGISTRY_VERSION,
            "schema_version": SCHEMA_VERSION,
            "seed": args.seed,
            "base_seed": args.base_seed,
            "per_tool": args.per_tool,
            "per_pipeline": args.per_pipeline,
            "split_ratio": args.split,
            "hit_rate": args.hit_rate,
            "pool": match cfg.pool { Pool::TrainVal => "trainval", Pool::Test => "test" },
            "records": total,
            "files": files,
            "sft_pairs": sft_pairs,
            "created_unix": unix_now(),
        }),
    )?;
    println!("generated {total} records into {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let records = read_dataset_file(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    if records.is_empty() {
        bail!("dataset {} holds no records", args.dataset.display());
    }
    let base = KnowledgeBase::default_base(args.base_seed);
    let registry = canonical_registry();
    let queries: Vec<Query> = records.iter().map(|record| record.query.clone()).collect();
    let cfg = SessionConfig {
        max_steps: args.max_steps,
        parse_mode: if args.strict { ParseMode::Strict } else { ParseMode::Lenient },
        on_violation: if args.retry_violation {
            ViolationPolicy::RetryOnce
        } else {
            ViolationPolicy::Abort
        },
    };
    let corruption = CorruptionConfig {
        p_decision: args.p_decision,
        p_tool: args.p_tool,
        p_input: args.p_input,
        p_final: args.p_final,
        rng_seed: args.corruption_seed,
    };

    let results = match args.backend {
        BackendArg::Scripted => run_batch(
            || -> Box<dyn CompletionBackend> {
                Box::new(ScriptedBackend::new(&records, &base, corruption))
            },
            &registry,
            &base,
            &queries,
            &cfg,
            args.workers,
        ),
        BackendArg::Breaker => run_batch(
            || -> Box<dyn CompletionBackend> { Box::new(FormatBreaker) },
            &registry,
            &base,
            &queries,
            &cfg,
            args.workers,
        ),
        BackendArg::Endpoint => {
            let url = args
                .endpoint
                .clone()
                .or_else(|| std::env::var("VIOT_ENDPOINT").ok())
                .context("endpoint backend needs --endpoint or VIOT_ENDPOINT")?;
            run_batch(
                move || -> Box<dyn CompletionBackend> {
                    Box::new(EndpointBackend::new(url.clone()))
                },
                &registry,
                &base,
                &queries,
                &cfg,
                args.workers,
            )
        }
    };

    let mut completed = 0usize;
    let mut violations = 0usize;
    let mut cap_exceeded = 0usize;
    let mut backend_errors = 0usize;
    for result in &results {
        match result.outcome {
            SessionOutcome::Completed => completed += 1,
            SessionOutcome::FormatViolation => violations += 1,
            SessionOutcome::StepCapExceeded => cap_exceeded += 1,
            SessionOutcome::BackendError => backend_errors += 1,
        }
    }
    if let Some(broken) = results.iter().find(|result| result.violation.is_some()) {
        eprintln!(
            "first violation: {} ({})",
            broken.violation.as_ref().unwrap(),
            broken.trace.query_id,
        );
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let traces: Vec<Trace> = results.into_iter().map(|result| result.trace).collect();
    write_trace_file(&traces, &args.out.join("traces.jsonl"))?;
    write_manifest(
        &args.out.join("manifest.json"),
        &serde_json::json!({
            "command": "run",
            "registry_version": REGISTRY_VERSION,
            "schema_version": SCHEMA_VERSION,
            "backend": args.backend.as_str(),
            "dataset": args.dataset.display().to_string(),
            "base_seed": args.base_seed,
            "corruption": {
                "p_decision": args.p_decision,
                "p_tool": args.p_tool,
                "p_input": args.p_input,
                "p_final": args.p_final,
                "seed": args.corruption_seed,
            },
            "workers": args.workers,
            "max_steps": args.max_steps,
            "parse_mode": if args.strict { "strict" } else { "lenient" },
            "retry_violation": args.retry_violation,
            "sessions": traces.len(),
            "completed": completed,
            "format_violations": violations,
            "step_cap_exceeded": cap_exceeded,
            "backend_errors": backend_errors,
            "created_unix": unix_now(),
        }),
    )?;
    println!(
        "sessions {} completed {completed} violations {violations} cap-exceeded {cap_exceeded} backend-errors {backend_errors}",
        traces.len(),
    );
    if completed == traces.len() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_score(args: ScoreArgs) -> Result<ExitCode> {
    let records = read_dataset_file(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    let traces = read_trace_file(&args.traces)
        .with_context(|| format!("reading {}", args.traces.display()))?;
    let opts = EvalOptions { lenient: !args.strict, match_final_text: args.match_final };
    let report = score(&canonical_registry(), &records, &traces, &opts)?;
    let text = match args.format {
        FormatArg::Markdown => render_markdown(&report),
        FormatArg::Csv => render_csv(&report),
    };
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_repl(args: ReplArgs) -> Result<ExitCode> {
    let base = if args.demo {
        KnowledgeBase::demo()
    } else {
        KnowledgeBase::default_base(args.base_seed)
    };
    let registry = canonical_registry();
    let mut backend = KeywordRouter::new(&base);
    let cfg = SessionConfig::default();
    eprintln!("ask about the camera network (blank line or ctrl-d to quit)");
    let stdin = std::io::stdin();
    for (index, line) in stdin.lock().lines().enumerate() {
        let line = line.context("reading stdin")?;
        let text = line.trim();
        if text.is_empty() {
            break;
        }
        let query = Query {
            id: format!("repl{index}"),
            text: text.to_string(),
            media_ref: None,
        };
        let result = run_session(&mut backend, &registry, &base, &query, &cfg);
        for step in &result.trace.steps {
            match &step.action {
                Action::ToolCall { tool_name, tool_input } => println!(
                    "[{tool_name}] {tool_input} -> {}",
                    step.observation.as_deref().unwrap_or("(no observation)"),
                ),
                Action::Final { answer } => println!("{answer}"),
            }
        }
        if !result.completed() {
            println!("(session ended without an answer: {:?})", result.outcome);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Score(args) => cmd_score(args),
        Command::Repl(args) => cmd_repl(args),
    };
    match outcome {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
