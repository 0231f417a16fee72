mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

/// Script-routed two-stage language identification.
#[derive(Debug, Parser)]
#[command(name = "lidkit", version)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a stage-1 (or, with --wide, a stage-2 reference) model.
    Train(TrainArgs),
    /// Identify the language of each input line.
    Identify(IdentifyArgs),
    /// Score a component on a labeled test set.
    Eval(EvalArgs),
    /// Throughput of every component on a labeled test set.
    Bench(BenchArgs),
    /// Accuracy and throughput of the ensemble across thresholds.
    SweepThreshold(SweepThresholdArgs),
    /// Train and score stage-1 models across embedding dimensions.
    SweepDim(SweepDimArgs),
    /// Flag parallel native/roman pairs for manual review.
    Flag(FlagArgs),
    /// Romanize a native-script corpus with a transliteration table.
    Romanize(RomanizeArgs),
    /// Dedup against held-out sets, then balance classes to a target size.
    Sample(SampleArgs),
    /// Serve the remote stage-2 protocol on 127.0.0.1.
    StubServer(StubServerArgs),
    /// Write a synthetic multi-script toy corpus.
    GenToy(GenToyArgs),
}

#[derive(Debug, Clone, Args)]
struct PipelineArgs {
    /// key=value pipeline config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    native_model: Option<PathBuf>,
    #[arg(long)]
    roman_model: Option<PathBuf>,
    /// `local:<model path>` or `remote:<base url>`.
    #[arg(long)]
    stage2: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
struct FeaturizerArgs {
    #[arg(long)]
    min_char_ngram: Option<usize>,
    #[arg(long)]
    max_char_ngram: Option<usize>,
    #[arg(long)]
    word_ngrams: Option<usize>,
    #[arg(long)]
    bucket_count: Option<usize>,
    #[arg(long)]
    word_vocab_limit: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled-line corpus (`__label__<tag>\t<text>`); repeatable.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to the sorted set of corpus labels.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    min_count: Option<u64>,
    /// Start from the wide stage-2 reference settings.
    #[arg(long)]
    wide: bool,
    #[command(flatten)]
    featurizer: FeaturizerArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the training log as JSON.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Read lines from this file instead of stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// One JSON object per line with the top-k list.
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Component {
    Ensemble,
    Native,
    Roman,
    Stage2,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value_t = Component::Ensemble)]
    component: Component,
    /// Average per-class metrics by support instead of uniformly.
    #[arg(long)]
    weighted: bool,
    /// Report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Confusion matrix as CSV.
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Accuracy by word-count bucket as CSV.
    #[arg(long)]
    lengths: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    length_edges: Vec<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepThresholdArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    from: f64,
    #[arg(long, default_value_t = 0.9)]
    to: f64,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Timing repetitions per threshold; the best is kept.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Debug, Args)]
struct SweepDimArgs {
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    dims: Vec<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[command(flatten)]
    featurizer: FeaturizerArgs,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FlagArgs {
    /// Native-script stage-1 model.
    #[arg(long)]
    model: PathBuf,
    /// `__label__<tag>\t<native text>\t<roman text>` lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_words: usize,
    #[arg(long, default_value_t = 0.8)]
    min_conf: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RomanizeArgs {
    /// Transliteration table (`<Script>\t<char>\t<latin>` lines).
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-letter edit rate applied after table romanization.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Also write native/roman review pairs for `flag`.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Labeled-line corpus; its file name is the source tag. Repeatable.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    target: usize,
    #[arg(long)]
    out: PathBuf,
    /// Class order for the output (default: registry or first appearance).
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Evaluation sets whose sentences must not appear in the output.
    #[arg(long)]
    heldout: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct StubServerArgs {
    #[arg(long, default_value_t = 0)]
    port: u16,
    #[arg(long)]
    registry: PathBuf,
    /// uniform | model:<path> | malformed | extra | unknown:<tag> |
    /// stall:<ms> | status:<code>
    #[arg(long, default_value = "uniform")]
    mode: String,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenToyArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    /// Edit rate of the perturbed romanized test split.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub(crate) type Result<T> = std::result::Result<T, CliError>;
