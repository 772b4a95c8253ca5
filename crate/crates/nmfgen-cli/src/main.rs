//! `nmfgen` command line: fit, select, estimate-alpha, estimate-power,
//! diagnose, compare, synth and bench subcommands over CSV/coordinate
//! matrices.
//!
//! Exit codes: 0 success, 1 input or processing error, 2 fit did not
//! converge (outputs are still written).

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nmfgen", version, about = "Traditional and convex NMF under Normal, Poisson, Tweedie and Negative Binomial cost functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Path to the observation matrix.
    #[arg(long)]
    input: PathBuf,
    /// Input layout: csv (dense) or coord (sparse triplets).
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Absolute divergence-change stopping threshold
    /// (default: 1e-6 times the first-iteration divergence).
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap per restart.
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Independent restarts; the lowest-divergence run wins.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Base RNG seed (restart r uses seed + r).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write factors, trace and a run report.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        /// Model spec, e.g. NMF/T/NB_5/4 or NMF/C/TW/3 (absent parameters
        /// are estimated from the data).
        #[arg(long)]
        model: String,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit several models at one rank and rank them by BIC.
    Select {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        rank: usize,
        /// Comma-separated variant/family tokens, e.g. T/Po,C/NB,T/TW_1.5.
        /// Defaults to all eight.
        #[arg(long)]
        models: Option<String>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the Negative Binomial dispersion from a Poisson pre-fit.
    EstimateAlpha {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        rank: usize,
        /// Factorisation variant: T or C.
        #[arg(long, default_value = "T")]
        variant: String,
        #[command(flatten)]
        fit: FitArgs,
        /// Also evaluate the profile log-likelihood on `lo,hi,steps`
        /// (log-spaced) and write it next to the result.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the Tweedie power and dispersion by profile likelihood.
    EstimatePower {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value = "T")]
        variant: String,
        /// Coarse grid step on [1, 2].
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Skip the fine second pass around the coarse optimum.
        #[arg(long)]
        no_refine: bool,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model and write residual and mean-variance diagnostics.
    Diagnose {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        model: String,
        /// Downsample the residual table to at most this many rows.
        #[arg(long)]
        max_rows: Option<usize>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match two feature matrices by cosine similarity.
    Compare {
        /// First K x M feature CSV (rows are features).
        #[arg(long)]
        features_a: PathBuf,
        /// Second K' x M feature CSV.
        #[arg(long)]
        features_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic matrix with planted factors.
    Synth {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        rank: usize,
        /// Sampling family: normal, poisson, negbin or compound.
        #[arg(long)]
        family: String,
        /// Dispersion sigma2 (normal, compound).
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Negative Binomial dispersion.
        #[arg(long)]
        alpha: Option<f64>,
        /// Compound-Poisson power in (1, 2).
        #[arg(long)]
        power: Option<f64>,
        /// Target mean of the planted reconstruction.
        #[arg(long, default_value_t = 20.0)]
        mean: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output layout for V.
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time one update sweep per model over a range of sizes.
    Bench {
        /// Comma-separated list of N values.
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 96)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Repetitions averaged per record.
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Comma-separated variant/family tokens (default: all eight).
        #[arg(long)]
        models: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("NMFGEN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // Caps restart- and grid-level parallelism.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit { input, model, fit, out } => commands::cmd_fit(&input, &model, &fit, &out),
        Command::Select { input, rank, models, fit, out } => {
            commands::cmd_select(&input, rank, models.as_deref(), &fit, &out)
        }
        Command::EstimateAlpha { input, rank, variant, fit, profile, out } => {
            commands::cmd_estimate_alpha(&input, rank, &variant, &fit, profile.as_deref(), &out)
        }
        Command::EstimatePower { input, rank, variant, step, no_refine, fit, out } => {
            commands::cmd_estimate_power(&input, rank, &variant, step, no_refine, &fit, &out)
        }
        Command::Diagnose { input, model, max_rows, fit, out } => {
            commands::cmd_diagnose(&input, &model, max_rows, &fit, &out)
        }
        Command::Compare { features_a, features_b, out } => {
            commands::cmd_compare(&features_a, &features_b, &out)
        }
        Command::Synth { rows, cols, rank, family, sigma2, alpha, power, mean, seed, format, out } => {
            commands::cmd_synth(
                rows, cols, rank, &family, sigma2, alpha, power, mean, seed, &format, &out,
            )
        }
        Command::Bench { sizes, m, k, reps, models, seed, out } => {
            commands::cmd_bench(&sizes, m, k, reps, models.as_deref(), seed, &out)
        }
    };

    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
