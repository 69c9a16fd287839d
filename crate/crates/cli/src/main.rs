//! `fixrocket` command-line entry point.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use fixrocket::detach::{Refit, DEFAULT_DROP_FRACTION, DEFAULT_TRADEOFF};
use fixrocket::harness::{SplitRatios, DEFAULT_THRESHOLD};
use fixrocket::ridge::{ClassBalance, DEFAULT_ALPHA};
use fixrocket::rocket::DEFAULT_NUM_KERNELS;

#[derive(Parser, Debug)]
#[command(
    name = "fixrocket",
    version,
    about = "Random-kernel classification of gaze-fixation recordings"
)]
pub struct Cli {
    /// key=value file of option defaults; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Global seed; every random stream is derived from it by name
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Run directory. Relative paths are placed under the output root.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,

    /// Output root for relative run directories
    #[arg(long, global = true, env = "FIXROCKET_OUT", default_value = ".")]
    pub root: PathBuf,

    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Write a synthetic cohort of raw sessions to <run>/cohort
    Generate(GenerateArgs),
    /// Turn raw sessions into a trial dataset
    Preprocess(PreprocessArgs),
    /// Draw a kernel bank and compute the pooled features
    Transform(TransformArgs),
    /// Fit the ridge classifier on the training subjects
    Train(TrainArgs),
    /// Run sequential feature detachment on train/validation subjects
    Detach(DetachArgs),
    /// Score the test subjects with a trained model, or run a multi-seed experiment
    Evaluate(EvaluateArgs),
    /// Cross-validated uF1 over kernel counts and ridge parameters
    GridSearch(GridArgs),
    /// Re-run preprocessing and evaluation across high-pass cutoffs
    SweepCutoff(SweepArgs),
    /// Rebuild the evaluation tables of a run directory from its saved artifacts
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Subjects per class
    #[arg(long, default_value_t = 30)]
    pub subjects: usize,
    /// Overrides --subjects for the control group
    #[arg(long)]
    pub hc_subjects: Option<usize>,
    /// Overrides --subjects for the patient group
    #[arg(long)]
    pub pd_subjects: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub sessions: usize,
    #[arg(long, default_value_t = 12)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.015)]
    pub white_noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub drift: f64,
    #[arg(long, default_value_t = 5.0)]
    pub tremor_hz: f64,
    #[arg(long, default_value_t = 0.02)]
    pub tremor_amplitude: f64,
    #[arg(long, default_value_t = 25.0)]
    pub signature_low_hz: f64,
    #[arg(long, default_value_t = 60.0)]
    pub signature_high_hz: f64,
    #[arg(long, default_value_t = 0.02)]
    pub band_noise: f64,
    /// PD band-noise power relative to HC (1 = no signature)
    #[arg(long, default_value_t = 3.0)]
    pub signature_multiplier: f64,
    #[arg(long, default_value_t = 0.1)]
    pub idiosyncrasy: f64,
    #[arg(long, default_value_t = 0.2)]
    pub amplitude_spread: f64,
}

#[derive(Args, Debug, Clone)]
pub struct FilterArgs {
    #[arg(long, default_value_t = 8)]
    pub order: usize,
    /// single or forward_backward
    #[arg(long, default_value = "forward_backward")]
    pub passes: String,
    #[arg(long, default_value_t = 300.0)]
    pub sample_rate: f64,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Directory of raw session files
    #[arg(long, required = true)]
    pub cohort: PathBuf,
    /// High-pass cutoff in Hz
    #[arg(long, default_value_t = 20.0)]
    pub cutoff: f64,
    /// Skip the high-pass filter
    #[arg(long)]
    pub no_filter: bool,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Preprocessed trial dataset
    #[arg(long, required = true)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NUM_KERNELS)]
    pub kernels: usize,
    /// Also write the full feature matrix (large for big banks)
    #[arg(long)]
    pub features: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Balance {
    None,
    Weighted,
    Resample,
}

impl Balance {
    pub fn to_core(self) -> ClassBalance {
        match self {
            Balance::None => ClassBalance::None,
            Balance::Weighted => ClassBalance::Weighted,
            Balance::Resample => ClassBalance::Resample { seed: 0 },
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefitArg {
    Train,
    TrainVal,
}

impl RefitArg {
    pub fn to_core(self) -> Refit {
        match self {
            RefitArg::Train => Refit::Train,
            RefitArg::TrainVal => Refit::TrainVal,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = DEFAULT_NUM_KERNELS)]
    pub kernels: usize,
    /// Ridge parameter
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Balance::Weighted)]
    pub balance: Balance,
    /// Subject vote threshold (PD iff mean probability is above it)
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// train,val,test proportions
    #[arg(long, default_value = "880,264,440")]
    pub ratios: SplitRatios,
    /// Use this split plan instead of drawing one from the seed
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SfdArgs {
    /// Fraction of the active features removed per step
    #[arg(long, default_value_t = DEFAULT_DROP_FRACTION)]
    pub drop: f64,
    /// Size/accuracy trade-off of the selection score
    #[arg(long, default_value_t = DEFAULT_TRADEOFF)]
    pub tradeoff: f64,
    #[arg(long, default_value_t = 1)]
    pub min_features: usize,
    #[arg(long, value_enum, default_value_t = RefitArg::Train)]
    pub refit: RefitArg,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, required = true)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Args, Debug)]
pub struct DetachArgs {
    #[arg(long, required = true)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub sfd: SfdArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, required = true)]
    pub dataset: PathBuf,
    /// Model to score (default: the run's detached model, else its trained model)
    #[arg(long, conflicts_with = "seeds")]
    pub model: Option<PathBuf>,
    /// Train and score one model per seed instead of loading one
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// With --seeds: select features by detachment
    #[arg(long)]
    pub sfd: bool,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub sfd_args: SfdArgs,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long, required = true)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub kernels_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2")]
    pub alphas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Balance::Weighted)]
    pub balance: Balance,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, required = true)]
    pub cohort: PathBuf,
    /// Cutoffs in Hz; 0 means unfiltered (default: 0 and 2.5 to 50 in 2.5 steps)
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// train,val,test proportions
    #[arg(long, default_value = "880,264,440")]
    pub ratios: SplitRatios,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directory to read (default: --out)
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Compare with the tables already in the run instead of only writing them
    #[arg(long)]
    pub check: bool,
}

pub enum Failure {
    Usage(String),
    Data(fixrocket::Error),
}

impl From<fixrocket::Error> for Failure {
    fn from(e: fixrocket::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let root = Cli::command();
    let argv = match config::merge(&root, args) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            return ExitCode::from(1);
        }
    };
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
