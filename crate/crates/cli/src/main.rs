//! `targetpred`: simulate data, fit a Bayesian model, extract targeted
//! sparse predictors and evaluate them out of sample.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 for numerical
//! failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "targetpred", version, about = "Targeted sparse prediction from posterior predictive draws")]
struct Cli {
    /// JSON object of settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known truth.
    Simulate(SimulateArgs),
    /// Fit a model and write its posterior draw archive.
    Fit(FitArgs),
    /// Compute penalized action paths for one or more functionals.
    Target(TargetArgs),
    /// Evaluate a path out of sample and select the simplest acceptable action.
    Evaluate(EvaluateArgs),
    /// Run the synthetic simulation study.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub rsnr: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `fosr` or `conjugate`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub num_basis: Option<usize>,
    /// Student-t innovation degrees of freedom (Gaussian if absent).
    #[arg(long)]
    pub t_dof: Option<f64>,
    /// Number of exact draws (conjugate model).
    #[arg(long)]
    pub draws: Option<usize>,
    /// Prior precision multiplying the identity (conjugate model).
    #[arg(long)]
    pub prior_precision: Option<f64>,
    /// Known noise variance; otherwise an inverse-gamma prior is used.
    #[arg(long)]
    pub noise_variance: Option<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub b0: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct PathArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Draw archive sidecar (JSON).
    #[arg(long)]
    pub draws: Option<PathBuf>,
    /// `replicate` or `new_subject`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub n_lambda: Option<usize>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub w_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    #[command(flatten)]
    pub common: PathArgs,
    /// Functional: a kind name, inline JSON, a JSON file or a contrast CSV.
    #[arg(long = "functional")]
    pub functionals: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: PathArgs,
    #[arg(long)]
    pub functional: Option<String>,
    /// Output row of a contrast functional.
    #[arg(long)]
    pub component: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Resampled draws per fold (default: a tenth of the draws).
    #[arg(long)]
    pub resample: Option<usize>,
    /// Margin in percent.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Keep untruncated importance weights.
    #[arg(long)]
    pub no_truncate: bool,
    /// Score full-data fits with unweighted draws instead.
    #[arg(long)]
    pub in_sample: bool,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub rsnr: Option<f64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub resample: Option<usize>,
    #[arg(long)]
    pub n_lambda: Option<usize>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<targetpred::Error>())
        .any(targetpred::Error::is_numerical);
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> anyhow::Result<()> {
        let layers = config::Layers::load(cli.config.as_deref())?;
        let threads = layers.opt(cli.threads, "threads")?;
        if let Some(t) = threads {
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
        }
        let seed = layers.get(cli.seed, "seed", 0)?;
        match &cli.command {
            Command::Simulate(a) => commands::simulate(a, &layers, seed),
            Command::Fit(a) => commands::fit(a, &layers, seed),
            Command::Target(a) => commands::target(a, &layers, seed),
            Command::Evaluate(a) => commands::evaluate(a, &layers, seed),
            Command::Replicate(a) => commands::replicate(a, &layers, seed),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
