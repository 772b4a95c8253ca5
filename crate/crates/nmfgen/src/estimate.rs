//! Data-driven estimation of the family parameters: Negative Binomial
//! dispersion alpha by Newton-Raphson MLE, Tweedie power p and dispersion
//! sigma2 by profile log-likelihood, and Pearson-residual dispersion for
//! dense data.

use ndarray::ArrayView2;
use rayon::prelude::*;
use statrs::function::gamma::digamma;

use crate::deviance::{density_supported, log_likelihood, negbin_log_likelihood};
use crate::error::{NmfError, Result};
use crate::factorize::{fit, FitConfig};
use crate::model::{free_parameter_count, CostModel, DataMatrix, Family, ModelSpec};
use crate::numeric::{golden_section_max, trigamma, CompensatedSum};

/// Dispersion cap; an estimate at the cap is reported as effectively Poisson.
pub const ALPHA_MAX: f64 = 1e8;
const ALPHA_MIN: f64 = 1e-6;
const NEWTON_MAX_STEPS: usize = 100;

/// Profile log-likelihood curve over a parameter grid.
#[derive(Debug, Clone)]
pub struct ProfileResult {
    pub grid: Vec<f64>,
    pub loglik: Vec<f64>,
    pub argmax: f64,
    pub argmax_loglik: f64,
}

impl ProfileResult {
    fn from_points(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(NmfError::InvalidGrid);
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (argmax, argmax_loglik) = points
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty profile");
        Ok(ProfileResult {
            grid: points.iter().map(|p| p.0).collect(),
            loglik: points.iter().map(|p| p.1).collect(),
            argmax,
            argmax_loglik,
        })
    }
}

/// Score and curvature of the Negative Binomial log-likelihood in alpha,
/// means held fixed.
fn alpha_score_curvature(v: ArrayView2<f64>, vhat: ArrayView2<f64>, alpha: f64) -> (f64, f64) {
    let mut score = CompensatedSum::new();
    let mut curve = CompensatedSum::new();
    let dig_alpha = digamma(alpha);
    let tri_alpha = trigamma(alpha);
    for (&x, &mu) in v.iter().zip(vhat.iter()) {
        let am = alpha + mu;
        score.add(digamma(x + alpha) - dig_alpha + alpha.ln() + 1.0 - am.ln() - (alpha + x) / am);
        curve.add(trigamma(x + alpha) - tri_alpha + 1.0 / alpha - 1.0 / am + (x - mu) / (am * am));
    }
    (score.value(), curve.value())
}

/// Maximum-likelihood Negative Binomial dispersion with means fixed at
/// `vhat`, by Newton-Raphson on log alpha; falls back to golden-section
/// search when Newton fails to settle. Capped at [`ALPHA_MAX`].
pub fn estimate_alpha(v: &DataMatrix, vhat: ArrayView2<f64>) -> Result<f64> {
    let data = v.values().view();
    if data.iter().all(|&x| x == 0.0) {
        return Err(NmfError::AllZeroData);
    }
    // Surfaces count-validation and shape errors before iterating.
    negbin_log_likelihood(data, vhat, 1.0)?;

    // Method-of-moments start: Pearson ratio ~ 1 + mean/alpha.
    let cells = (v.n_rows() * v.n_cols()) as f64;
    let chi2: f64 = data
        .iter()
        .zip(vhat.iter())
        .map(|(&x, &mu)| (x - mu) * (x - mu) / mu.max(1e-12))
        .sum();
    let mean_mu = vhat.sum() / cells;
    let overdispersion = (chi2 / cells - 1.0).max(1e-6);
    let alpha0 = (mean_mu / overdispersion).clamp(ALPHA_MIN, ALPHA_MAX);

    let (lo, hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    let mut theta = alpha0.ln();
    for _ in 0..NEWTON_MAX_STEPS {
        let alpha = theta.exp();
        let (score, curvature) = alpha_score_curvature(data, vhat, alpha);
        // Chain rule to theta = ln alpha.
        let g = score * alpha;
        let g_prime = curvature * alpha * alpha + score * alpha;
        if !g.is_finite() || !g_prime.is_finite() || g_prime >= 0.0 {
            return golden_fallback(data, vhat, lo, hi);
        }
        let step = (-g / g_prime).clamp(-4.0, 4.0);
        let next = (theta + step).clamp(lo, hi);
        if next >= hi && g > 0.0 {
            // Boundary maximum: data is equidispersed or underdispersed.
            return Ok(ALPHA_MAX);
        }
        let done = (next - theta).abs() < 1e-10;
        theta = next;
        if done {
            return Ok(theta.exp());
        }
    }
    golden_fallback(data, vhat, lo, hi)
}

fn golden_fallback(v: ArrayView2<f64>, vhat: ArrayView2<f64>, lo: f64, hi: f64) -> Result<f64> {
    log::warn!("Newton-Raphson for alpha did not settle; falling back to golden-section search");
    let objective =
        |theta: f64| negbin_log_likelihood(v, vhat, theta.exp()).unwrap_or(f64::NEG_INFINITY);
    let (theta, _) = golden_section_max(lo, hi, 1e-10, objective);
    Ok(theta.exp())
}

/// Negative Binomial profile log-likelihood over an alpha grid.
pub fn alpha_profile(v: &DataMatrix, vhat: ArrayView2<f64>, grid: &[f64]) -> Result<ProfileResult> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NmfError::InvalidGrid);
    }
    let mut points = Vec::with_capacity(grid.len());
    for &alpha in grid {
        points.push((alpha, negbin_log_likelihood(v.values().view(), vhat, alpha)?));
    }
    ProfileResult::from_points(points)
}

/// Grid layout for the power profile.
#[derive(Debug, Clone, Copy)]
pub struct PowerGrid {
    pub coarse_step: f64,
    /// Second pass around the coarse argmax; `None` disables refinement.
    pub refine_step: Option<f64>,
}

impl Default for PowerGrid {
    fn default() -> Self {
        PowerGrid {
            coarse_step: 0.05,
            refine_step: Some(0.01),
        }
    }
}

/// Estimated Tweedie power with its dispersion and the profile curve.
#[derive(Debug, Clone)]
pub struct PowerEstimate {
    pub p: f64,
    pub sigma2: f64,
    pub profile: ProfileResult,
}

/// Fit the Tweedie power by profile log-likelihood on {0} u [1, 2]
/// (right-open when the data has zeros), running a full NMF fit per grid
/// point. The dispersion at each p comes from Pearson residuals on dense
/// data and from the profile likelihood otherwise; p = 1 pins sigma2 = 1.
pub fn estimate_power(v: &DataMatrix, spec: &ModelSpec, config: &FitConfig) -> Result<PowerEstimate> {
    estimate_power_with(v, spec, config, &PowerGrid::default())
}

pub fn estimate_power_with(
    v: &DataMatrix,
    spec: &ModelSpec,
    config: &FitConfig,
    grid: &PowerGrid,
) -> Result<PowerEstimate> {
    if spec.family != Family::Tweedie {
        return Err(NmfError::InvalidInput(format!(
            "power estimation applies to Tweedie specs, got {:?}",
            spec.family
        )));
    }
    spec.require_rank()?;

    let include_two = !v.is_sparse();
    let coarse = power_grid_points(1.0, 2.0, grid.coarse_step, include_two);
    let mut evaluated = evaluate_power_points(v, spec, config, &coarse)?;

    if let Some(step) = grid.refine_step {
        let coarse_best = evaluated
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("coarse grid non-empty");
        if coarse_best.0 >= 1.0 {
            let lo = (coarse_best.0 - grid.coarse_step).max(1.0);
            let hi = (coarse_best.0 + grid.coarse_step).min(2.0);
            let fine: Vec<f64> = power_grid_points(lo, hi, step, include_two && hi >= 2.0)
                .into_iter()
                .filter(|p| *p >= 1.0)
                .filter(|p| evaluated.iter().all(|(q, _, _)| (q - p).abs() > 1e-9))
                .collect();
            if !fine.is_empty() {
                evaluated.extend(evaluate_power_points(v, spec, config, &fine)?);
            }
        }
    }

    let (p_hat, _, sigma2_hat) = evaluated
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("profile non-empty");
    let profile = ProfileResult::from_points(evaluated.iter().map(|&(p, ll, _)| (p, ll)).collect())?;
    Ok(PowerEstimate {
        p: p_hat,
        sigma2: sigma2_hat,
        profile,
    })
}

/// {0} plus the arithmetic grid on [lo, hi]; 2.0 is dropped on sparse data.
fn power_grid_points(lo: f64, hi: f64, step: f64, include_two: bool) -> Vec<f64> {
    let mut points = if lo <= 1.0 { vec![0.0] } else { Vec::new() };
    let mut p = lo;
    while p < hi + 1e-9 {
        let rounded = (p * 1e9).round() / 1e9;
        if rounded < 2.0 || include_two {
            points.push(rounded.min(2.0));
        }
        p += step;
    }
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    points
}

/// Evaluate (p, loglik, sigma2) per grid point; failed points are skipped
/// with a warning.
fn evaluate_power_points(
    v: &DataMatrix,
    spec: &ModelSpec,
    config: &FitConfig,
    points: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    let results: Vec<(f64, Result<(f64, f64)>)> = points
        .par_iter()
        .map(|&p| (p, evaluate_power_point(v, spec, config, p)))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (p, result) in results {
        match result {
            Ok((loglik, sigma2)) => out.push((p, loglik, sigma2)),
            Err(e) => log::warn!("skipping power grid point p = {p}: {e}"),
        }
    }
    if out.is_empty() {
        return Err(NmfError::InvalidGrid);
    }
    Ok(out)
}

fn evaluate_power_point(
    v: &DataMatrix,
    spec: &ModelSpec,
    config: &FitConfig,
    p: f64,
) -> Result<(f64, f64)> {
    let fit_spec = ModelSpec::new(spec.variant, Family::Tweedie, Some(p), spec.rank);
    let cost = CostModel::Tweedie { p, sigma2: 1.0 };
    let fitted = fit(v, &fit_spec, &cost, config)?;
    let vhat = fitted.fitted.view();
    let sigma2 = dispersion_at_power(v, vhat, p, spec)?;
    let loglik = log_likelihood(v, vhat, &CostModel::Tweedie { p, sigma2 })?;
    Ok((loglik, sigma2))
}

/// Dispersion for a fixed power: pinned for Poisson, Pearson on dense data,
/// profile likelihood otherwise.
pub fn dispersion_at_power(
    v: &DataMatrix,
    vhat: ArrayView2<f64>,
    p: f64,
    spec: &ModelSpec,
) -> Result<f64> {
    if p == 1.0 {
        return Ok(1.0);
    }
    if !v.is_sparse() {
        let n_params = free_parameter_count(spec, v.n_rows(), v.n_cols())?;
        return pearson_dispersion(v, vhat, p, n_params).map(|s| s.max(1e-12));
    }
    profile_dispersion(v, vhat, p)
}

/// Maximum-likelihood sigma2 for fixed p and fixed means.
fn profile_dispersion(v: &DataMatrix, vhat: ArrayView2<f64>, p: f64) -> Result<f64> {
    if p == 0.0 {
        // Closed form: mean squared residual.
        let mut acc = CompensatedSum::new();
        for (&x, &mu) in v.values().iter().zip(vhat.iter()) {
            acc.add((x - mu) * (x - mu));
        }
        let cells = (v.n_rows() * v.n_cols()) as f64;
        return Ok((acc.value() / cells).max(1e-12));
    }
    if !density_supported(p) {
        return Err(NmfError::UnsupportedDensityPower(p));
    }
    let objective = |log_s2: f64| {
        log_likelihood(v, vhat, &CostModel::Tweedie { p, sigma2: log_s2.exp() })
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (log_s2, _) = golden_section_max((1e-8_f64).ln(), (1e8_f64).ln(), 1e-9, objective);
    Ok(log_s2.exp())
}

/// Pearson-residual dispersion on dense data:
/// sum((x - mu)^2 / mu^p) / (N M - n_params).
pub fn pearson_dispersion(
    v: &DataMatrix,
    vhat: ArrayView2<f64>,
    p: f64,
    n_params: usize,
) -> Result<f64> {
    if v.is_sparse() {
        return Err(NmfError::SparsityViolation(v.sparsity()));
    }
    let cells = v.n_rows() * v.n_cols();
    let dof = cells as i64 - n_params as i64;
    if dof <= 0 {
        return Err(NmfError::NonPositiveDof(dof));
    }
    let mut acc = CompensatedSum::new();
    for ((row, col), &mu) in vhat.indexed_iter() {
        if mu <= 0.0 {
            return Err(NmfError::NonPositiveEntry { row, col, value: mu });
        }
        let x = v.values()[(row, col)];
        acc.add((x - mu) * (x - mu) / mu.powf(p));
    }
    let sigma2 = acc.value() / dof as f64;
    if sigma2 == 0.0 {
        log::warn!("Pearson dispersion is zero: the fit reproduces the data exactly");
    }
    Ok(sigma2)
}

/// Fill in any absent cost parameters for `spec`:
/// Poisson needs none; Normal estimates sigma2 from a Normal pre-fit;
/// Tweedie estimates (p, sigma2) by profile likelihood (or just sigma2 when
/// p is given); Negative Binomial runs a Poisson pre-fit of the same variant
/// and takes the alpha MLE. Explicit family parameters pass through.
pub fn resolve_cost(v: &DataMatrix, spec: &ModelSpec, config: &FitConfig) -> Result<CostModel> {
    match (spec.family, spec.family_param) {
        (Family::Poisson, _) => Ok(CostModel::Poisson),
        (Family::Normal, _) => {
            let prefit = fit(v, spec, &CostModel::Normal { sigma2: 1.0 }, config)?;
            let sigma2 = if v.is_sparse() {
                profile_dispersion(v, prefit.fitted.view(), 0.0)?
            } else {
                let n_params = free_parameter_count(spec, v.n_rows(), v.n_cols())?;
                pearson_dispersion(v, prefit.fitted.view(), 0.0, n_params)?.max(1e-12)
            };
            Ok(CostModel::Normal { sigma2 })
        }
        (Family::NegBin, Some(alpha)) => Ok(CostModel::NegBin { alpha }),
        (Family::NegBin, None) => {
            let poisson_spec = ModelSpec::new(spec.variant, Family::Poisson, None, spec.rank);
            let prefit = fit(v, &poisson_spec, &CostModel::Poisson, config)?;
            let alpha = estimate_alpha(v, prefit.fitted.view())?;
            Ok(CostModel::NegBin { alpha })
        }
        (Family::Tweedie, Some(p)) => {
            let cost = CostModel::Tweedie { p, sigma2: 1.0 };
            if p == 1.0 {
                return Ok(cost);
            }
            let prefit = fit(v, spec, &cost, config)?;
            let sigma2 = dispersion_at_power(v, prefit.fitted.view(), p, spec)?;
            Ok(CostModel::Tweedie { p, sigma2 })
        }
        (Family::Tweedie, None) => {
            let estimate = estimate_power(v, spec, config)?;
            Ok(CostModel::Tweedie {
                p: estimate.p,
                sigma2: estimate.sigma2,
            })
        }
    }
}
