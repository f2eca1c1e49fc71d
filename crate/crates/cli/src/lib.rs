//! Command-line front end and HTTP service for the reward toolkit.
//!
//! [`run`] is the whole CLI behind an argv slice and two writers, so tests
//! can drive it without spawning processes.

pub mod api;
pub mod service;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use absa_rl_core::data;
use absa_rl_core::eval::{evaluate_absc, evaluate_aoste, TextTable};
use absa_rl_core::grpo::AdvantageMode;
use absa_rl_core::rejection::Selection;
use absa_rl_core::toy::{TrainConfig, Trainer};
use absa_rl_core::trace::{parse_answer_absc, parse_answer_aoste};
use absa_rl_core::{parse_trace, GoldPayload, RawGeneration, Scorer, Task};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable read by `serve` when `--bind` is absent.
pub const BIND_ENV: &str = "ABSA_RL_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "absa-rl", version, about = "Reward scoring, rejection filtering and toy GRPO training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every sample against its gold record.
    Score(ScoreArgs),
    /// Drop correct samples and attach group-relative advantages.
    Filter(FilterArgs),
    /// Corpus metrics for predictions.
    Evaluate(EvaluateArgs),
    /// Train the tabular toy policy and write a report.
    TrainToy(TrainArgs),
    /// Run the HTTP scoring service.
    Serve(ServeArgs),
}

/// Config flags shared by every verb. Flags override `--config` values.
#[derive(Debug, Args)]
struct Common {
    /// Training config document (JSON).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps_low: Option<f64>,
    #[arg(long)]
    eps_high: Option<f64>,
    /// full-group or retained-only.
    #[arg(long, value_parser = parse_mode)]
    advantage_mode: Option<AdvantageMode>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    gold: PathBuf,
    generations: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    gold: PathBuf,
    generations: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Batch statistics file; printed to stderr when absent.
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
    /// reject-correct or keep-all.
    #[arg(long, value_parser = parse_selection)]
    selection: Option<Selection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum F1Average {
    Macro,
    Weighted,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    gold: PathBuf,
    /// Predictions in the generations format; every sample is evaluated.
    predictions: PathBuf,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    format: TableFormat,
    #[arg(long, value_enum, default_value_t = F1Average::Macro)]
    f1_average: F1Average,
    /// Samples are bare answer text rather than full traces.
    #[arg(long)]
    answers_only: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    warm_start: Option<f64>,
    #[arg(long, value_parser = parse_selection)]
    selection: Option<Selection>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    /// Listen address; falls back to $ABSA_RL_BIND, then 127.0.0.1:8080.
    #[arg(long)]
    bind: Option<SocketAddr>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Maximum request body in bytes.
    #[arg(long, default_value_t = 2 * 1024 * 1024)]
    body_limit: usize,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<AdvantageMode, String> {
    s.parse()
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    match s {
        "reject-correct" => Ok(Selection::RejectCorrect),
        "keep-all" => Ok(Selection::KeepAll),
        other => Err(format!("unknown selection {other:?} (expected reject-correct or keep-all)")),
    }
}

/// Reads a config document, naming the offending field on error.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let cfg = serde_path_to_error::deserialize(&mut *de).map_err(|e| {
        let field = e.path().to_string();
        anyhow!("{}: field {field}: {}", path.display(), e.into_inner())
    })?;
    de.end().map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(cfg)
}

impl Common {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => TrainConfig::default(),
        };
        let r = &mut cfg.scoring.reward;
        set(&mut r.lambda, self.lambda);
        set(&mut r.gamma, self.gamma);
        set(&mut r.tau, self.tau);
        set(&mut cfg.clip.epsilon_low, self.eps_low);
        set(&mut cfg.clip.epsilon_high, self.eps_high);
        set(&mut cfg.advantage_mode, self.advantage_mode);
        set(&mut cfg.seed, self.seed);
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn validated(mut cfg: TrainConfig, tweak: impl FnOnce(&mut TrainConfig)) -> Result<TrainConfig> {
    tweak(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to `--out` when given, otherwise to `stdout`.
fn emit(out: Option<&Path>, stdout: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("{}", path.display()))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).with_context(|| format!("{}", path.display()))
        }
        None => f(stdout).context("writing output"),
    }
}

fn header_with_config<T: Serialize>(kind: &str, task: Task, config: &T) -> Result<serde_json::Value> {
    let mut h = data::header(kind, Some(task));
    h["config"] = serde_json::to_value(config)?;
    Ok(h)
}

fn cmd_score(a: &ScoreArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = validated(a.common.resolve()?, |_| {})?;
    let scorer = Scorer::new(cfg.scoring.clone())?;
    let gold = data::load_gold(&a.gold, a.task)?;
    let gens = data::load_generations(&a.generations)?;
    let items = api::score_files(&scorer, &gold, &gens).map_err(|e| anyhow!("{}: {e}", a.generations.display()))?;
    let header = header_with_config("scores", a.task, &cfg.scoring)?;
    emit(a.out.as_deref(), stdout, |mut w| data::write_json_lines(&mut w, &header, &items))
}

fn cmd_filter(a: &FilterArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let cfg = validated(a.common.resolve()?, |c| set(&mut c.selection, a.selection))?;
    let scorer = Scorer::new(cfg.scoring.clone())?;
    let gold = data::load_gold(&a.gold, a.task)?;
    let gens = data::load_generations(&a.generations)?;
    let groups = api::groups_from_files(&gold, &gens).map_err(|e| anyhow!("{}: {e}", a.generations.display()))?;
    let (records, stats) = api::filter_groups(&groups, &scorer, cfg.advantage_mode, &cfg.advantage, cfg.selection)?;
    let mut header = header_with_config("filtered", a.task, &cfg.scoring)?;
    header["advantage_mode"] = serde_json::to_value(cfg.advantage_mode)?;
    header["selection"] = serde_json::to_value(cfg.selection)?;
    emit(a.out.as_deref(), stdout, |mut w| data::write_json_lines(&mut w, &header, &records))?;
    let stats = serde_json::to_string(&stats)?;
    match &a.stats {
        Some(p) => std::fs::write(p, format!("{stats}\n")).with_context(|| format!("{}", p.display())),
        None => writeln!(stderr, "{stats}").context("writing stats"),
    }
}

fn answer_text(sample: &str, answers_only: bool) -> String {
    if answers_only {
        sample.to_string()
    } else {
        parse_trace(&RawGeneration::new(sample)).answer_text
    }
}

fn cmd_evaluate(a: &EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
    validated(a.common.resolve()?, |_| {})?;
    let gold = data::load_gold(&a.gold, a.task)?;
    let preds = data::load_generations(&a.predictions)?;
    let joined = api::join(&gold, &preds).map_err(|e| anyhow!("{}: {e}", a.predictions.display()))?;
    let missing: Vec<&str> =
        gold.iter().filter(|g| !preds.iter().any(|p| p.id == g.id)).map(|g| g.id.as_str()).collect();
    if let Some(id) = missing.first() {
        bail!("{}: no prediction for gold id {id:?} ({} missing)", a.predictions.display(), missing.len());
    }
    let table: TextTable = match a.task {
        Task::Absc => {
            let mut pairs = Vec::new();
            for (g, p) in &joined {
                let GoldPayload::Absc { label, .. } = &g.payload else { unreachable!("loaded as absc") };
                for s in &p.samples {
                    pairs.push((parse_answer_absc(&answer_text(s, a.answers_only)), *label));
                }
            }
            evaluate_absc(&pairs)?.to_table(a.f1_average == F1Average::Weighted)
        }
        Task::Aoste => {
            let mut pairs = Vec::new();
            for (g, p) in &joined {
                let GoldPayload::Aoste { triplets } = &g.payload else { unreachable!("loaded as aoste") };
                for s in &p.samples {
                    let pred = parse_answer_aoste(&answer_text(s, a.answers_only)).map(|x| x.triplets).unwrap_or_default();
                    pairs.push((pred, triplets.clone()));
                }
            }
            evaluate_aoste(&pairs)?.to_table()
        }
    };
    let rendered = match a.format {
        TableFormat::Text => table.to_text(),
        TableFormat::Csv => table.to_csv(),
    };
    emit(a.out.as_deref(), stdout, |w| w.write_all(rendered.as_bytes()))
}

fn cmd_train(a: &TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = validated(a.common.resolve()?, |c| {
        set(&mut c.iterations, a.iterations);
        set(&mut c.group_size, a.group_size);
        set(&mut c.learning_rate, a.learning_rate);
        set(&mut c.task_count, a.tasks);
        set(&mut c.warm_start, a.warm_start);
        set(&mut c.selection, a.selection);
    })?;
    let report = Trainer::<f64>::new(cfg)?.run()?;
    let header = serde_json::to_value(&report.header)?;
    emit(a.out.as_deref(), stdout, |mut w| data::write_json_lines(&mut w, &header, &report.iterations))
}

fn bind_address(flag: Option<SocketAddr>) -> Result<SocketAddr> {
    if let Some(addr) = flag {
        return Ok(addr);
    }
    match std::env::var(BIND_ENV) {
        Ok(v) => v.parse().with_context(|| format!("{BIND_ENV}={v:?} is not a socket address")),
        Err(_) => Ok(DEFAULT_BIND.parse().expect("valid default")),
    }
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let cfg = validated(a.common.resolve()?, |_| {})?;
    if a.workers == 0 {
        bail!("--workers must be at least 1");
    }
    let addr = bind_address(a.bind)?;
    let opts = service::ServiceOptions { workers: a.workers, body_limit: a.body_limit };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(addr, cfg, opts)).with_context(|| format!("serving on {addr}"))
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a
/// runtime failure, 2 on a usage error.
pub fn run<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(stdout, "{}", e.render());
                return if e.kind() == DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("error: invalid arguments");
            let _ = writeln!(stderr, "{first}");
            return 2;
        }
    };
    let result = match &cli.command {
        Command::Score(a) => cmd_score(a, stdout),
        Command::Filter(a) => cmd_filter(a, stdout, stderr),
        Command::Evaluate(a) => cmd_evaluate(a, stdout),
        Command::TrainToy(a) => cmd_train(a, stdout),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
    }
}
