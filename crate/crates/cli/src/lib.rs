//! The `kgtext` command line: data building, training, conversion,
//! evaluation, checkpoint selection and the noise ablation grid.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgtext_core::data::{pairs_from_records, read_jsonl, DataError, Direction, Pair};
use kgtext_core::noise::{NoiseFn, NoisePlan, Regime};
use kgtext_neuro::checkpoint::CheckpointError;
use kgtext_train::eval::EvalError;
use kgtext_train::{ConfigError, RunError, TrainConfig, TrainError};

mod commands;

pub use commands::{ablate, build_data, convert, evaluate, select, train, EvalReport};

#[derive(Debug, Parser)]
#[command(name = "kgtext", version, about = "Unsupervised conversion between knowledge graphs and text")]
pub struct Cli {
    /// Overrides the config seed (and seeds data building).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Builds JSONL splits and a stats file from a raw dataset.
    BuildData(BuildDataArgs),
    /// Runs supervised or unsupervised training per the config.
    Train(TrainArgs),
    /// Converts a JSONL file with a rule system or a checkpoint.
    Convert(ConvertArgs),
    /// Scores predictions against a reference JSONL file; prints JSON.
    Evaluate(EvaluateArgs),
    /// Picks the best checkpoint of a run directory.
    Select(SelectArgs),
    /// Trains and scores the noise ablation grid.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Webnlg,
    Vg,
    Synthetic,
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    #[arg(long, value_enum)]
    pub dataset: Dataset,
    /// Raw dataset directory (WebNLG release root, or a directory holding
    /// region_graphs.json).
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Keep only images with a fact mentioning a "...ball" object.
    #[arg(long)]
    pub ball_subset: bool,
    /// Number of synthetic pairs.
    #[arg(long, default_value_t = 500)]
    pub instances: usize,
}

/// Noise-plan overrides shared by `train` and `ablate`.
#[derive(Debug, Clone, Default, Args)]
pub struct NoiseArgs {
    /// `sampled` or `composed`.
    #[arg(long)]
    pub regime: Option<Regime>,
    /// Use a single noise function.
    #[arg(long = "noise-only", alias = "only", conflicts_with = "exclude")]
    pub only: Option<NoiseFn>,
    /// Use every noise function but one.
    #[arg(long = "noise-exclude", alias = "exclude")]
    pub exclude: Option<NoiseFn>,
    /// Train without noise.
    #[arg(long, conflicts_with_all = ["only", "exclude", "regime"])]
    pub no_noise: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Backtranslation iterations (overrides max_unsup_iterations).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConvertMode {
    RuleG2t,
    RuleT2g,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    G2t,
    T2g,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::G2t => Direction::GraphToText,
            DirectionArg::T2g => Direction::TextToGraph,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub mode: ConvertMode,
    #[arg(long)]
    pub input: PathBuf,
    /// Required with `--mode model`.
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Required with `--mode model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    #[arg(long)]
    pub references: PathBuf,
    /// Output of `convert`.
    #[arg(long, group = "system")]
    pub predictions: Option<PathBuf>,
    /// Decode the references' sources with this checkpoint.
    #[arg(long, group = "system")]
    pub checkpoint: Option<PathBuf>,
    /// Convert the references' sources with the rule system.
    #[arg(long, group = "system")]
    pub rule: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    MValBleu,
    MValF1,
    MUnsupBleu,
    MUnsupF1,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Run directory holding `iter-N.ckpt` or `epoch-N.ckpt` files.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, value_enum)]
    pub criterion: Criterion,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Backtranslation iterations per cell (overrides max_unsup_iterations).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Train(e) => CliError::Train(e),
            RunError::Eval(e) => CliError::Eval(e),
            RunError::Checkpoint(e) => CliError::Checkpoint(e),
            RunError::Io { path, source } => CliError::Io { path, source },
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NON_FINITE: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Checkpoint(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Train(TrainError::NonFiniteLoss(_) | TrainError::NonFiniteGradient(_)) => EXIT_NON_FINITE,
            CliError::Train(_) | CliError::Eval(_) => 1,
        }
    }
}

impl NoiseArgs {
    /// The plan these flags select on top of `base`, if any flag is set.
    pub fn apply(&self, base: &NoisePlan) -> NoisePlan {
        let regime = self.regime.unwrap_or(base.regime);
        if self.no_noise {
            NoisePlan::none()
        } else if let Some(f) = self.only {
            NoisePlan::only(regime, f)
        } else if let Some(f) = self.exclude {
            NoisePlan::all_but(regime, f)
        } else {
            NoisePlan { regime, functions: base.functions.clone() }
        }
    }
}

/// The config file (or defaults) with `--seed` applied.
pub fn load_config(cli: &Cli) -> Result<TrainConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn read_pairs(path: &Path) -> Result<Vec<Pair>, CliError> {
    Ok(pairs_from_records(&read_jsonl(path)?))
}

pub(crate) fn require<'a, T>(value: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

pub(crate) fn write_out(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source }),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::BuildData(a) => build_data(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Convert(a) => convert(cli, a),
        Command::Evaluate(a) => evaluate(cli, a).map(|_| ()),
        Command::Select(a) => select(cli, a).map(|_| ()),
        Command::Ablate(a) => ablate(cli, a).map(|_| ()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
