//! Goodness-of-fit and factor-quality diagnostics: residuals with
//! model-implied bands, BIC, mean-variance curves, cosine similarity with
//! optimal feature matching, and top-entry summaries.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::deviance::log_likelihood;
use crate::error::{NmfError, Result};
use crate::factorize::Factorization;
use crate::model::{format_model_spec, free_parameter_count, CostModel, DataMatrix, ModelSpec};

/// One residual observation: fitted value, raw residual, and the
/// two-standard-deviation band of the assumed model at that fitted value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualRow {
    pub fitted: f64,
    pub residual: f64,
    pub band: f64,
}

/// Residuals for every matrix entry, optionally downsampled for plotting.
#[derive(Debug, Clone)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    pub model: CostModel,
    pub downsample_seed: Option<u64>,
}

impl ResidualTable {
    /// Fraction of residuals inside the band.
    pub fn coverage(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let inside = self
            .rows
            .iter()
            .filter(|r| r.residual.abs() <= r.band)
            .count();
        inside as f64 / self.rows.len() as f64
    }

    /// Uniform subsample without replacement down to `max_rows`, recording
    /// the seed used.
    pub fn downsample(mut self, max_rows: usize, seed: u64) -> ResidualTable {
        if self.rows.len() > max_rows {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.rows.shuffle(&mut rng);
            self.rows.truncate(max_rows);
            self.downsample_seed = Some(seed);
        }
        self
    }
}

/// Residual R = x - mu per entry with the model band 2 sqrt(Var(mu)).
pub fn residual_table(v: &DataMatrix, fit: &Factorization, cost: &CostModel) -> Result<ResidualTable> {
    let data = v.values();
    if data.dim() != fit.fitted.dim() {
        return Err(NmfError::ShapeMismatch {
            expected: data.dim(),
            got: fit.fitted.dim(),
        });
    }
    let rows = data
        .iter()
        .zip(fit.fitted.iter())
        .map(|(&x, &mu)| ResidualRow {
            fitted: mu,
            residual: x - mu,
            band: 2.0 * cost.variance(mu).sqrt(),
        })
        .collect();
    Ok(ResidualTable {
        rows,
        model: *cost,
        downsample_seed: None,
    })
}

/// BIC = n_params ln(N M) - 2 loglik, with one observation per matrix cell.
pub fn bic(v: &DataMatrix, fit: &Factorization, cost: &CostModel, spec: &ModelSpec) -> Result<f64> {
    let n_params = free_parameter_count(spec, v.n_rows(), v.n_cols())?;
    let loglik = log_likelihood(v, fit.fitted.view(), cost)?;
    Ok(bic_from_loglik(loglik, n_params, v.n_rows() * v.n_cols()))
}

pub fn bic_from_loglik(loglik: f64, n_params: usize, cells: usize) -> f64 {
    n_params as f64 * (cells as f64).ln() - 2.0 * loglik
}

/// Model variance at each grid mean.
pub fn meanvar_curve(cost: &CostModel, mean_grid: &[f64]) -> Vec<(f64, f64)> {
    mean_grid
        .iter()
        .map(|&mu| (mu, cost.variance(mu)))
        .collect()
}

/// Diagnostics bundle for one fitted model.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub spec: String,
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
    pub coverage_2sd: f64,
    pub meanvar_curve: Vec<(f64, f64)>,
}

/// Number of points sampled on the mean-variance curve.
const MEANVAR_POINTS: usize = 100;

pub fn fit_report(
    v: &DataMatrix,
    fit: &Factorization,
    cost: &CostModel,
    spec: &ModelSpec,
) -> Result<FitReport> {
    let n_params = free_parameter_count(spec, v.n_rows(), v.n_cols())?;
    let loglik = log_likelihood(v, fit.fitted.view(), cost)?;
    let coverage = residual_table(v, fit, cost)?.coverage();
    let lo = fit.fitted.iter().copied().fold(f64::INFINITY, f64::min).max(1e-9);
    let hi = fit.fitted.iter().copied().fold(0.0_f64, f64::max).max(lo * (1.0 + 1e-9));
    let step = (hi - lo) / (MEANVAR_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..MEANVAR_POINTS).map(|i| lo + step * i as f64).collect();
    Ok(FitReport {
        spec: format_model_spec(&cost.resolved_spec(spec)),
        loglik,
        n_params,
        bic: bic_from_loglik(loglik, n_params, v.n_rows() * v.n_cols()),
        coverage_2sd: coverage,
        meanvar_curve: meanvar_curve(cost, &grid),
    })
}

/// Cosine of the angle between two vectors; errors on a zero vector.
pub fn cosine_similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NmfError::ShapeMismatch {
            expected: (a.len(), 1),
            got: (b.len(), 1),
        });
    }
    let norm_a = a.dot(&a).sqrt();
    let norm_b = b.dot(&b).sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(NmfError::ZeroVector);
    }
    Ok(a.dot(&b) / (norm_a * norm_b))
}

/// One matched feature pair and its similarity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub similarity: f64,
}

/// Optimal one-to-one feature matching.
#[derive(Debug, Clone, Serialize)]
pub struct Assignment {
    pub pairs: Vec<MatchedPair>,
    pub total_similarity: f64,
    pub mean_similarity: f64,
    pub min_similarity: f64,
}

/// Match the rows of `a` (K x M) to the rows of `b` (K' x M), maximising the
/// total cosine similarity over one-to-one assignments. Size mismatches are
/// padded with zero-similarity dummy slots; only real pairs are reported.
pub fn match_features(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Assignment> {
    if a.ncols() != b.ncols() {
        return Err(NmfError::ShapeMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ka = a.nrows();
    let kb = b.nrows();
    let n = ka.max(kb);
    let mut similarity = Array2::zeros((n, n));
    for i in 0..ka {
        for j in 0..kb {
            similarity[(i, j)] = cosine_similarity(a.row(i), b.row(j))?;
        }
    }
    let cost = similarity.mapv(|s| -s);
    let assignment = hungarian_min(&cost);

    let mut pairs = Vec::new();
    for (i, &j) in assignment.iter().enumerate().take(ka) {
        if j < kb {
            pairs.push(MatchedPair {
                a: i,
                b: j,
                similarity: similarity[(i, j)],
            });
        }
    }
    let total: f64 = pairs.iter().map(|p| p.similarity).sum();
    let min = pairs
        .iter()
        .map(|p| p.similarity)
        .fold(f64::INFINITY, f64::min);
    let mean = if pairs.is_empty() { 0.0 } else { total / pairs.len() as f64 };
    Ok(Assignment {
        pairs,
        total_similarity: total,
        mean_similarity: mean,
        min_similarity: min,
    })
}

/// Exact O(n^3) Hungarian assignment on a square cost matrix, returning the
/// column assigned to each row. Potentials-based shortest augmenting paths.
pub fn hungarian_min(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-indexed with column 0 as the virtual start of augmenting paths.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Per-feature top-k labelled weights. Each row is normalised to sum to one
/// before ranking; ties keep label (column) order.
pub fn top_entries(
    features: ArrayView2<f64>,
    labels: &[String],
    topk: usize,
) -> Result<Vec<Vec<(String, f64)>>> {
    if labels.len() != features.ncols() {
        return Err(NmfError::LabelMismatch {
            labels: labels.len(),
            cols: features.ncols(),
        });
    }
    if topk > features.ncols() {
        return Err(NmfError::TopKTooLarge {
            topk,
            cols: features.ncols(),
        });
    }
    let mut out = Vec::with_capacity(features.nrows());
    for row in features.rows() {
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(NmfError::ZeroVector);
        }
        let mut entries: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .map(|(j, &w)| (j, w / total))
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        out.push(
            entries
                .into_iter()
                .take(topk)
                .map(|(j, w)| (labels[j].clone(), w))
                .collect(),
        );
    }
    Ok(out)
}
