//! The `cefrkit` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.
//! Settings come from defaults, then `--config <file.json>`, then flags.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::corpus::CorpusError;
use crate::difficulty::DifficultyError;
use crate::providers::{ProviderError, Transport};
use crate::readability::{Feature, ReadabilityError};
use crate::scheme::SchemeError;
use crate::simplify::SimplifyError;

pub use config::{ClassifierConfig, ClassifierKind, ProviderSet, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Provider(_) => EXIT_PROVIDER,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ReadabilityError> for CliError {
    fn from(e: ReadabilityError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DifficultyError> for CliError {
    fn from(e: DifficultyError) -> Self {
        let msg = e.to_string();
        match e.root() {
            DifficultyError::Provider(_) | DifficultyError::UnparseableReply { .. } => CliError::Provider(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<SimplifyError> for CliError {
    fn from(e: SimplifyError) -> Self {
        fn is_provider(e: &SimplifyError) -> bool {
            match e {
                SimplifyError::Provider(_) | SimplifyError::EmptyCompletion => true,
                SimplifyError::Proxy(d) => {
                    matches!(d.root(), DifficultyError::Provider(_) | DifficultyError::UnparseableReply { .. })
                }
                SimplifyError::Item { source, .. } => is_provider(source),
                _ => false,
            }
        }
        let msg = e.to_string();
        match e {
            SimplifyError::WeightOutOfRange(_) => CliError::Usage(msg),
            ref other if is_provider(other) => CliError::Provider(msg),
            _ => CliError::Data(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cefrkit", version, about = "CEFR difficulty estimation and simplification evaluation for French text")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Input corpus (CSV or JSONL); repeat to pass several.
    #[arg(long = "in", global = true)]
    inputs: Vec<PathBuf>,
    /// Output file, or output directory for multi-file commands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Label scheme: cefr or ljl.
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use offline mock backends; no network access.
    #[arg(long, global = true)]
    mock: bool,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Accuracy weight of the w-score (similarity gets 1 - w1).
    #[arg(long, global = true)]
    w1: Option<f64>,
    /// Corpus format when the extension does not tell (csv or jsonl).
    #[arg(long, global = true)]
    input_format: Option<String>,
    /// Classifier used for classify, eval-difficulty and as simplification proxy.
    #[arg(long, global = true, value_enum)]
    classifier: Option<ClassifierKind>,
    /// Model file for the readability or head classifier.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Do not send the assessor context to the remote classifier.
    #[arg(long, global = true)]
    no_context: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corpus statistics as JSON.
    Stats,
    /// GFI, FKGL and ARI per item.
    Readability {
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        emit: String,
    },
    /// Fit a score-to-label calibration model on a labeled corpus.
    Calibrate {
        /// Readability feature; defaults to the config value (fkgl).
        #[arg(long)]
        feature: Option<Feature>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        l2: Option<f64>,
    },
    /// Fit a softmax head over embeddings of a labeled corpus.
    TrainHead {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        l2: Option<f64>,
    },
    /// Classify one text or every item of a corpus.
    Classify {
        #[arg(long)]
        text: Option<String>,
    },
    /// Evaluate a classifier on a labeled test corpus.
    EvalDifficulty {
        /// Also write the confusion matrix as CSV.
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
    },
    /// Simplify one text.
    Simplify {
        #[arg(long)]
        text: String,
        /// Current level of the text, used in the prompt.
        #[arg(long)]
        level: Option<String>,
    },
    /// Evaluate a simplifier: report.json and records.jsonl in --out.
    EvalSimplification {
        /// Sample this many items per level and input corpus first.
        #[arg(long)]
        per_level: Option<usize>,
        /// Levels to sample (comma separated); defaults to every level but the lowest.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<String>,
        /// Use the unnormalized w-score expression instead of the harmonic mean.
        #[arg(long)]
        literal_wscore: bool,
    },
    /// Iterative simplification: traces.jsonl and aggregate.csv in --out.
    Iterate {
        #[arg(long)]
        text: Option<String>,
        #[arg(long, default_value_t = 8)]
        max_iters: usize,
        /// Only use corpus items with this gold level.
        #[arg(long)]
        level: Option<String>,
        /// Sample at most this many sentences (seeded).
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Stratified seeded split: train and test files in --out.
    Split {
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
    },
}

/// Where the CLI writes and which transport remote backends use.
pub struct Context<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
    /// `None` builds a real HTTP transport on first use.
    pub transport: Option<Arc<dyn Transport>>,
}

type Overrides = Vec<(String, String)>;

/// Pulls `--provider.<role>.<field>[=value]` pairs out of `args`.
fn extract_provider_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(key) = arg.strip_prefix("--provider.") else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let value = iter.next().ok_or_else(|| CliError::Usage(format!("{arg} needs a value")))?;
                (key.to_string(), value)
            }
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<String>, ctx: &mut Context<'_>) -> i32 {
    let (args, overrides) = match extract_provider_overrides(args) {
        Ok(split) => split,
        Err(e) => {
            let _ = writeln!(ctx.stderr, "error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(ctx.stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(ctx.stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, overrides, ctx) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(ctx.stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn build_config(global: &GlobalArgs, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &global.scheme {
        config.scheme = s.clone();
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(p) = global.parallelism {
        config.parallelism = p;
    }
    if let Some(w1) = global.w1 {
        config.w1 = w1;
    }
    if let Some(kind) = global.classifier {
        config.classifier.kind = kind;
    }
    if let Some(model) = &global.model {
        config.classifier.model_path = Some(model.clone());
    }
    if global.no_context {
        config.classifier.with_context = false;
    }
    for (key, value) in overrides {
        config.apply_provider_override(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: Cli, overrides: Vec<(String, String)>, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let config = build_config(&cli.global, &overrides)?;
    let mut session = commands::Session::new(config, cli.global, ctx)?;
    session.run(cli.command)
}
