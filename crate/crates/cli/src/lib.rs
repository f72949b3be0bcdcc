//! `uar`: train value heads, forge datasets, benchmark policies, decide
//! from feature files and serve the gate over HTTP.

pub mod commands;
pub mod config;
pub mod error;
pub mod service;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ServeArgs;
use crate::error::{CliError, ExitCode};

#[derive(Debug, Parser)]
#[command(name = "uar", version, about = "Active retrieval gate over LLM hidden states")]
pub struct Cli {
    /// Log filter for batch commands (serve reads its own config).
    #[arg(long, global = true, env = "UAR_LOG_LEVEL", default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one value head on a feature file and write its JSON.
    Train(TrainArgs),
    /// Build training sets and benchmark suites from text pools.
    #[command(subcommand)]
    Forge(ForgeCommand),
    /// Score policies on benchmark features or downstream QA runs.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Stream one decision JSON line per input record.
    Decide(DecideArgs),
    /// Serve decisions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training feature file (JSONL or binary).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation feature file. Without it, a stratified share of --train is held out.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub valid_fraction: f64,
    /// Output classifier JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Tag the head with this scenario instead of the one in the records.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, default_value_t = 5e-5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// adam or sgd.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
}

#[derive(Debug, Subcommand)]
pub enum ForgeCommand {
    /// Label QA items known/unknown by sampling the model k times.
    SelfLabel(SelfLabelArgs),
    /// Known vs unknown questions (writes train/valid.jsonl).
    SelfAware(SelfAwareArgs),
    /// Time-sensitive vs static questions.
    TimeAware(TimeAwareArgs),
    /// Non-knowledge-intensive vs knowledge-intensive inputs.
    KnowledgeAware(KnowledgeAwareArgs),
    /// Base inputs with and without an explicit retrieval request (writes train/valid/test.jsonl).
    IntentAware(IntentAwareArgs),
    /// Build the four balanced benchmark subtasks.
    ArBench(ArBenchArgs),
    /// Check a benchmark directory against every suite invariant.
    CheckBench(CheckBenchArgs),
}

#[derive(Debug, Args)]
pub struct SelfLabelArgs {
    #[arg(long)]
    pub items: PathBuf,
    /// Generation endpoint (POST {"prompt","temperature","seed"}).
    #[arg(long, conflicts_with = "script")]
    pub generator_url: Option<String>,
    /// Scripted responses, JSONL of {"prompt","responses"}.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Judge endpoint; without it answers are checked lexically.
    #[arg(long)]
    pub judge_url: Option<String>,
    #[arg(long, default_value = "unspecified")]
    pub model_tag: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Receives labels.json, known.jsonl and unknown.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelfAwareArgs {
    #[arg(long)]
    pub known: PathBuf,
    #[arg(long)]
    pub unknown: PathBuf,
    #[arg(long, default_value = "unspecified")]
    pub model_tag: String,
    #[arg(long, default_value_t = 0.1)]
    pub valid_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TimeAwareArgs {
    #[arg(long)]
    pub time_sensitive: PathBuf,
    #[arg(long = "static")]
    pub static_pool: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct KnowledgeAwareArgs {
    #[arg(long)]
    pub non_ki: PathBuf,
    #[arg(long)]
    pub ki: PathBuf,
    #[arg(long)]
    pub valid_non_ki: usize,
    #[arg(long)]
    pub valid_ki: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct IntentAwareArgs {
    #[arg(long)]
    pub base: PathBuf,
    /// JSONL of {"id","text"} intent phrases.
    #[arg(long)]
    pub intents: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ArBenchArgs {
    #[arg(long)]
    pub known: PathBuf,
    #[arg(long)]
    pub unknown: PathBuf,
    #[arg(long)]
    pub time_sensitive: PathBuf,
    #[arg(long)]
    pub non_ki: PathBuf,
    #[arg(long)]
    pub intents: PathBuf,
    /// Examples per class in each subtask.
    #[arg(long)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Files whose item or source ids must not appear in the suite. Repeatable.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    #[arg(long, default_value = "unspecified")]
    pub model_tag: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckBenchArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Accuracy and confusion per subtask for one policy.
    Ar(ArEvalArgs),
    /// Each head alone next to the full cascade.
    Compare(ArEvalArgs),
    /// Accuracy and retrieval rate of recorded RAG exchanges.
    Downstream(DownstreamArgs),
}

#[derive(Debug, Args)]
pub struct ArEvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Directory with <subtask>.features.{jsonl,bin}.
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, default_value = "uar_tree")]
    pub policy: String,
    #[arg(long, default_value = "unspecified")]
    pub model_tag: String,
    /// Warn instead of failing on unbalanced subtasks.
    #[arg(long)]
    pub allow_unbalanced: bool,
    /// json or markdown.
    #[arg(long, default_value = "json")]
    pub format: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DownstreamArgs {
    /// JSONL of {"dataset","exchange","gold_answers"}.
    #[arg(long)]
    pub items: PathBuf,
    /// lexical, extract or judge; applies to datasets not listed in --plan.
    #[arg(long, default_value = "lexical")]
    pub scoring: String,
    /// JSON scoring plan {"default":{...},"per_dataset":{name:{...}}}.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Judge endpoint, required when any dataset is judge-scored.
    #[arg(long)]
    pub judge_url: Option<String>,
    /// json or markdown.
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[arg(long, required_unless_present = "traces")]
    pub bundle: Option<PathBuf>,
    /// Feature file (JSONL or binary).
    #[arg(long, required_unless_present = "traces")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "uar_tree")]
    pub policy: String,
    /// Evaluate all four heads for every record.
    #[arg(long)]
    pub eager: bool,
    /// Token-probability traces, JSONL of {"id","probs"}; selects the threshold policy.
    #[arg(long, conflicts_with_all = ["bundle", "input"])]
    pub traces: Option<PathBuf>,
    #[arg(long, requires = "traces", conflicts_with = "preset")]
    pub theta: Option<f64>,
    /// 7b or 13b.
    #[arg(long, requires = "traces")]
    pub preset: Option<String>,
    /// Wrap each line as {"id":...,"decision":...}.
    #[arg(long)]
    pub with_ids: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub(crate) fn init_logging(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(level).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(filter)
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage.code() } else { ExitCode::Ok.code() };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Serve(a) => commands::serve(a),
        other => {
            init_logging(&cli.log_level);
            match other {
                Command::Train(a) => commands::train(a),
                Command::Forge(f) => commands::forge(f),
                Command::Bench(b) => commands::bench(b),
                Command::Decide(d) => commands::decide(d),
                Command::Serve(_) => unreachable!(),
            }
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("{}", e.to_json_line());
    e.exit.code()
}
