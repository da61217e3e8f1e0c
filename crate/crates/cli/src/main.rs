//! `setfusion` command-line interface.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use setfusion_core::{Error, TrainConfig};

/// Environment variable holding the worker-thread count.
const THREADS_ENV: &str = "SETFUSION_THREADS";

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "setfusion",
    version,
    about = "Image-set classification with fused Riemannian descriptors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (manifest plus per-set CSV files).
    Synth(SynthArgs),
    /// Train a model on every set in a manifest and save it.
    Train(TrainCmd),
    /// Evaluate over random gallery/probe splits.
    Eval(EvalArgs),
    /// Classify one set file with a saved model.
    Predict(PredictArgs),
    /// Compare single descriptors with the combined model.
    Ablate(EvalArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 6)]
    sets_per_class: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Samples (columns) per set.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 5.0)]
    separation: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Debug, Clone)]
struct TrainFlags {
    /// Subspace dimension.
    #[arg(long, default_value_t = 10)]
    q: usize,
    /// Covariance regularizer.
    #[arg(long, default_value_t = 1000.0)]
    alpha: f64,
    /// Target dimension of the learned metric.
    #[arg(long, default_value_t = 25)]
    dw: usize,
    /// Gating learning rate.
    #[arg(long, default_value_t = 1e-4)]
    gamma: f64,
    /// Outer training iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Trace-ratio iterations per outer iteration.
    #[arg(long, default_value_t = 30)]
    itr_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of cov,subspace,gauss.
    #[arg(long, default_value = "cov,subspace,gauss")]
    descriptors: String,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    normalize_kernels: Switch,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig, Error> {
        let cfg = TrainConfig {
            subspace_dim: self.q,
            alpha: self.alpha,
            target_dim: self.dw,
            gamma: self.gamma,
            outer_iters: self.iters,
            itr_iters: self.itr_iters,
            eps: self.eps,
            seed: self.seed,
            normalize_kernels: self.normalize_kernels == Switch::On,
            descriptors: TrainConfig::parse_descriptors(&self.descriptors)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[arg(long)]
    manifest: std::path::PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    /// Model directory to write.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: std::path::PathBuf,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    #[arg(long, default_value_t = 3)]
    train_per_class: usize,
    #[command(flatten)]
    train: TrainFlags,
    /// Write CSV tables to this path (plus `_trace`, `_ablation`, `_sweep` siblings).
    #[arg(long)]
    report: Option<std::path::PathBuf>,
    /// Comma-separated target dimensions to sweep instead of `--dw`.
    #[arg(long, value_delimiter = ',')]
    dw_sweep: Vec<usize>,
    /// Run splits in parallel.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    /// Set file: one row per feature dimension, one column per sample.
    #[arg(long)]
    set: std::path::PathBuf,
    /// Number of nearest gallery sets to list.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let flags = match &cli.command {
        Command::Train(a) => Some(&a.train),
        Command::Eval(a) | Command::Ablate(a) => Some(&a.train),
        Command::Synth(_) | Command::Predict(_) => None,
    };
    if let Some(Err(e)) = flags.map(TrainFlags::config) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a, false),
        Command::Predict(a) => commands::predict(&a),
        Command::Ablate(a) => commands::eval(&a, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { EXIT_DATA } else { EXIT_NUMERIC })
        }
    }
}
