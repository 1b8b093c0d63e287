mod commands;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

/// Adversarial policy/critic training from expert demonstrations.
#[derive(Debug, Parser)]
#[command(name = "raro", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a task dataset as JSONL.
    GenData(GenDataArgs),
    /// Train one method and write a run directory.
    Train(TrainArgs),
    /// Greedy accuracy of a checkpoint on a data split.
    Eval(EvalArgs),
    /// Tournament accuracy as a function of the number of candidates.
    Tts(TtsArgs),
    /// Run the exact enumeration checks and report their errors.
    OracleCheck(OracleArgs),
    /// Convert a run's metrics to CSV.
    ExportMetrics(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Task {
    Countdown,
    HiddenRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Raro,
    Sft,
    Rlvr,
    RlLogit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Reasoning,
    Direct,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    /// Countdown operand count.
    #[arg(long, default_value_t = 3)]
    operands: usize,
    #[arg(long, default_value_t = 1)]
    min_operand: u32,
    #[arg(long, default_value_t = 9)]
    max_operand: u32,
    #[arg(long, default_value_t = 10)]
    target: u32,
    /// Hidden-rule prompt length.
    #[arg(long, default_value_t = 4)]
    prompt_len: usize,
    /// Where hidden-rule ids go; defaults to `<out>.rules.jsonl`.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

/// Dataset location and how it is split.
#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Hidden-rule sidecar, needed only for evaluation.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    validation: usize,
    #[arg(long, default_value_t = 256)]
    test: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// JSON config; omitted fields take the desk defaults of the method.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Start from this checkpoint instead of a fresh format warm-up.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "reasoning")]
    mode: ModeArg,
    /// Budgets are read from this config when given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TtsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Candidate counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    votes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    position_swap: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    spaces: usize,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Defaults to `<run>/metrics.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Tts(a) => commands::tts(&a),
        Command::OracleCheck(a) => commands::oracle_check(&a),
        Command::ExportMetrics(a) => export::export_metrics(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
