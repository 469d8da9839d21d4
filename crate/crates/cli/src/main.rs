//! `csbayes`: data generation, training, reconstruction, evaluation and
//! sweeps from the command line.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "csbayes", version, about = "Compressive-sensing reconstruction with sparse Bayesian priors")]
struct Cli {
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true, env = "CSBAYES_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate measured train/test (and optional tuning) bundles.
    GenData(GenDataArgs),
    /// Fit a CSGMM or CSVAE from compressed observations.
    Train(TrainArgs),
    /// Reconstruct every sample of a bundle; writes one CSV row per sample.
    Reconstruct(ReconstructArgs),
    /// Score estimates against a bundle's ground truth.
    Evaluate(EvaluateArgs),
    /// Run a full grid sweep from a TOML config.
    Sweep(SweepArgs),
    /// Sample a trained prior and check densities against the sparsity envelope.
    AuditBound(AuditArgs),
}

/// Options shared by commands that read an experiment config.
#[derive(Args, Debug, Clone)]
pub struct ConfigArg {
    /// Base TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub base: ConfigArg,
    /// piecewise, spikes or idx.
    #[arg(long)]
    pub kind: Option<String>,
    /// Signal length for synthetic families.
    #[arg(long)]
    pub n: Option<usize>,
    /// IDX image file for `--kind idx`.
    #[arg(long)]
    pub idx: Option<PathBuf>,
    #[arg(long)]
    pub spikes: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub n_train: usize,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Ground-truth samples for Lasso tuning; 0 skips the file.
    #[arg(long, default_value_t = 0)]
    pub n_tune: usize,
    #[arg(long)]
    pub m: usize,
    /// Signal-to-noise ratio in dB; `inf` for noiseless data.
    #[arg(long, default_value_t = 10.0)]
    pub snr_db: f64,
    /// Draw a fresh measurement matrix per sample.
    #[arg(long)]
    pub per_sample: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for train.bin, test.bin and tune.bin.
    #[arg(long, default_value = "data")]
    pub out_dir: PathBuf,
}

/// Dictionary selection for commands that need one.
#[derive(Args, Debug, Clone)]
pub struct DictArgs {
    /// identity, pixel, db4-1d or db4-2d.
    #[arg(long)]
    pub dict: Option<String>,
    /// Wavelet decomposition level (default: the largest admissible).
    #[arg(long)]
    pub level: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub base: ConfigArg,
    /// csgmm or csvae.
    #[arg(long)]
    pub method: String,
    /// Training bundle written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub dict: DictArgs,
    #[arg(long, default_value = "model.bin")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mixture components.
    #[arg(long)]
    pub k: Option<usize>,
    /// Relative log-likelihood tolerance of the EM loop.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Widest hidden layer.
    #[arg(long)]
    pub cap: Option<usize>,
    /// raw or least-squares.
    #[arg(long)]
    pub input_mode: Option<String>,
    #[arg(long)]
    pub validation_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub base: ConfigArg,
    /// sbl, lasso, csgmm or csvae.
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Model file for csgmm/csvae.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub dict: DictArgs,
    /// SBL iterations or Lasso sweeps.
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// pixel or dictionary.
    #[arg(long)]
    pub domain: Option<String>,
    /// cme or map.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Latent draws of the CSVAE conditional mean estimator.
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "estimates.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub estimates: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        std::env::set_var(csbayes::parallel::WORKERS_ENV, w.to_string());
    }
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::AuditBound(a) => commands::audit_bound(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
