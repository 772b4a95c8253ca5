//! JSON report shapes written by the subcommands.

use std::path::PathBuf;

use serde::Serialize;

/// Echo of the stopping configuration a run used.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

/// Wall time per pipeline phase, in seconds.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PhaseSeconds {
    pub estimate: f64,
    pub fit: f64,
    pub diagnose: f64,
}

/// Top-level record written by `fit` (and embedded by `select`).
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub spec: String,
    pub config: ConfigEcho,
    /// Seed of the winning restart.
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub final_divergence: f64,
    pub loglik: f64,
    pub bic: f64,
    pub n_params: usize,
    pub wall_time_seconds: PhaseSeconds,
    /// Every file this run wrote.
    pub manifest: Vec<PathBuf>,
}

/// One benchmark measurement: mean seconds per update sweep.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub variant: String,
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub repetitions: usize,
    pub threads: usize,
    pub seconds_per_iteration: f64,
}
