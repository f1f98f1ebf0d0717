//! `ftfof` command-line pipeline: bounds, sampling, data generation, training, optimization
//! and baseline comparison.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ftfof::baselines::Baseline;
use ftfof::surrogate::LossKind;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ftfof::Error> for CliError {
    fn from(e: ftfof::Error) -> Self {
        use ftfof::Error as E;
        let code = match e {
            E::Infeasible(_) | E::SamplerStarvation { .. } | E::Policy(_) => 4,
            E::Domain(_) | E::Validation(_) | E::OutOfRange { .. } | E::Unreachable { .. } => 2,
            E::Shape(_) | E::Oracle(_) | E::Training { .. } | E::Parse(_) | E::Io(_) | E::Json(_) => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ftfof", version, about = "Foot trajectory and force optimization pipeline")]
pub struct Cli {
    /// JSON configuration file; omitted sections use the reference setup.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage; overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the leg's foot position and velocity bounds.
    Bounds,
    /// Draw climbable control polygons.
    Sample {
        /// Number of polygons (default: the config's sample_count).
        #[arg(short, long)]
        n: Option<usize>,
        /// Bounds file from `bounds`; the config bounds are used otherwise.
        #[arg(long)]
        bounds: Option<PathBuf>,
    },
    /// Label a climbable set with oracle forces.
    Datagen {
        #[arg(long)]
        set: PathBuf,
    },
    /// Train the detachment-force and pre-pressure models.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        hyper: TrainFlags,
    },
    /// Report model losses on the train and validation splits.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        validation_fraction: Option<f64>,
    },
    /// Run NSGA-II and select one trajectory from the front.
    Optimize {
        #[command(flatten)]
        source: ForceSource,
        #[arg(long)]
        bounds: Option<PathBuf>,
        #[arg(long)]
        pop_size: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        /// Validate the configuration and inputs without evaluating anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Compare the selected trajectory against baseline trajectories.
    Compare {
        /// `selected.json` written by `optimize`.
        #[arg(long)]
        selected: PathBuf,
        #[command(flatten)]
        source: ForceSource,
        #[arg(long)]
        bounds: Option<PathBuf>,
        /// Baselines to include (repeatable; default: all).
        #[arg(long, value_enum)]
        baseline: Vec<BaselineArg>,
    },
}

#[derive(Args, Debug)]
pub struct ForceSource {
    /// Trained models from `train`.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Score with the noise-free oracle instead of trained models.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// DILATE shape/temporal weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Soft-DTW smoothing.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum LossArg {
    Dilate,
    Mse,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Dilate => LossKind::Dilate,
            LossArg::Mse => LossKind::Mse,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineArg {
    Polynomial,
    Cycloidal,
    RandomBezier,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Polynomial => Baseline::Polynomial,
            BaselineArg::Cycloidal => Baseline::Cycloidal,
            BaselineArg::RandomBezier => Baseline::RandomBezier,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
