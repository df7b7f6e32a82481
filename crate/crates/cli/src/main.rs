//! `threatlens` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 invalid input
//! data, 4 failure while training, scoring or writing results.

mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use threatlens::corpus::Language;
use threatlens::embedding::{EmbeddingFormat, Pooling};

#[derive(Parser, Debug)]
#[command(name = "threatlens", version, about = "Multilingual threat detection on short posts")]
pub struct Cli {
    /// Seed for splits, model initialization and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for reports and trained models.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Attach polarity labels from a sentiment lexicon.
    Label(LabelArgs),
    /// Clean, segment, drop stopwords and stem.
    Preprocess(PreprocessArgs),
    /// Pool word vectors into one vector per post.
    Embed(EmbedArgs),
    /// Train one model on the training split.
    Train(TrainArgs),
    /// Score a trained model on a split.
    Eval(EvalArgs),
    /// Run a full experiment from a config file.
    Experiment(ExperimentArgs),
    /// Write a synthetic four-language corpus with configs.
    ExportFixtures(FixtureArgs),
    /// Check a config file and every file it references.
    ValidateConfig,
}

#[derive(Args, Debug, Clone)]
pub struct ResourceArgs {
    /// Replaces the shipped stopword list of the language.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Replaces the shipped Chinese segmentation wordlist.
    #[arg(long)]
    pub zh_wordlist: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub lang: Language,
    /// Tab-separated word and score.
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub resources: ResourceArgs,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub lang: Language,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = threatlens::preprocess::DEFAULT_MIN_TOKENS)]
    pub min_tokens: usize,
    /// Keep posts without a final label.
    #[arg(long)]
    pub keep_unlabeled: bool,
    #[command(flatten)]
    pub resources: ResourceArgs,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Preprocessed JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub lang: Language,
    /// Pretrained vectors; skip-gram vectors are trained on the input when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<EmbeddingFormat>,
    #[arg(long, default_value = "mean")]
    pub pooling: Pooling,
    /// Skip-gram vector width.
    #[arg(long, default_value_t = threatlens::embedding::DEFAULT_DIM)]
    pub dim: usize,
    /// Also save the trained skip-gram vectors in word2vec text format.
    #[arg(long)]
    pub save_embeddings: Option<PathBuf>,
    /// Encoded dataset JSON.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Lr,
    Dt,
    Rf,
    Birnf,
    Bilstm,
    Bigru,
    Head,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Input: encoded JSON for lr/dt/rf, preprocessed JSONL for recurrent
    /// models, HSB1 hidden states for the head.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub split_ratio: f64,
    /// Embeddings for recurrent models.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<EmbeddingFormat>,
    /// Language of the input for recurrent models.
    #[arg(long)]
    pub lang: Option<Language>,
    #[arg(long, default_value_t = threatlens::preprocess::DEFAULT_MAX_WORDS)]
    pub max_words: usize,
    #[arg(long, default_value_t = threatlens::preprocess::DEFAULT_MAXLEN)]
    pub maxlen: usize,
    /// Average hidden states over padding positions too.
    #[arg(long)]
    pub pool_include_padding: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    #[command(flatten)]
    pub split: SplitArgs,
    /// JSON file with the model's config fields.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Model file; recurrent models also write `<stem>.vocab.json`.
    #[arg(long)]
    pub output: PathBuf,
    /// Per-epoch trace CSV for recurrent and head models.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub subset: Subset,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Models trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel_models: usize,
    /// Split each language separately in combined mode.
    #[arg(long)]
    pub stratify_by_lang: bool,
    /// Average hidden states over padding positions too.
    #[arg(long)]
    pub pool_include_padding: bool,
    /// Skip writing trained models.
    #[arg(long)]
    pub no_models: bool,
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 400)]
    pub per_language: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
}

fn init_logging(level: &str) {
    let filter = level.parse().unwrap_or(log::LevelFilter::Info);
    env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.log_level);
    match stages::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
