//! Multiplicative MM updates for all eight variant/family engines and the
//! alternating fit driver with random restarts.
//!
//! Traditional NMF approximates V (N x M) by W H with W: N x K, H: K x M.
//! Convex NMF approximates V^T (M x N) by V^T E D with E: N x K, D: K x N.
//! Every update multiplies the current factor by a ratio of non-negative
//! matrices, so non-negativity is preserved and the divergence is
//! non-increasing by the majorize-minimise construction.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::deviance::{negbin_divergence, tweedie_divergence};
use crate::error::{NmfError, Result};
use crate::model::{CostModel, DataMatrix, ModelSpec, Variant};

/// Floor for denominators and updated factor entries. Multiplicative updates
/// cannot recover from an exact zero, so the iteration is kept interior.
pub const EPS_FLOOR: f64 = 1e-16;

/// Largest Tweedie power accepted for deviance-based fitting.
pub const MAX_FIT_POWER: f64 = 3.0;

/// Update engine selected from a resolved cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    Normal,
    Poisson,
    Tweedie(f64),
    NegBin(f64),
}

impl Engine {
    /// Pick the dedicated kernel where the power collapses to a special case.
    pub fn from_cost(cost: &CostModel) -> Engine {
        match cost {
            CostModel::Normal { .. } => Engine::Normal,
            CostModel::Poisson => Engine::Poisson,
            CostModel::Tweedie { p, .. } if *p == 0.0 => Engine::Normal,
            CostModel::Tweedie { p, .. } if *p == 1.0 => Engine::Poisson,
            CostModel::Tweedie { p, .. } => Engine::Tweedie(*p),
            CostModel::NegBin { alpha } => Engine::NegBin(*alpha),
        }
    }

    /// Divergence minimised by this engine.
    pub fn divergence(&self, data: ArrayView2<f64>, recon: ArrayView2<f64>) -> Result<f64> {
        match self {
            Engine::Normal => tweedie_divergence(data, recon, 0.0),
            Engine::Poisson => tweedie_divergence(data, recon, 1.0),
            Engine::Tweedie(p) => tweedie_divergence(data, recon, *p),
            Engine::NegBin(alpha) => negbin_divergence(data, recon, *alpha),
        }
    }
}

/// Exponent applied to the Tweedie update ratio: 1 at p = 0, 1/p for p >= 1.
#[inline]
pub fn gamma_exponent(p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        1.0 / p
    }
}

fn ensure_finite(a: &Array2<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NmfError::NonFinite(what))
    }
}

#[inline]
fn floored(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(|x| x.max(EPS_FLOOR));
    a
}

fn apply_ratio(factor: &Array2<f64>, numer: Array2<f64>, denom: Array2<f64>, exponent: f64) -> Array2<f64> {
    let mut ratio = numer / floored(denom);
    if exponent != 1.0 {
        ratio.mapv_inplace(|r| r.powf(exponent));
    }
    floored(factor * &ratio)
}

// ---------------------------------------------------------------------------
// Traditional kernels. Each returns the updated factor with the other held
// fixed; the reconstruction W H is recomputed from the arguments.
// ---------------------------------------------------------------------------

pub fn normal_h_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let wh = floored(w.dot(h));
    apply_ratio(h, w.t().dot(v), w.t().dot(&wh), 1.0)
}

pub fn normal_w_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let wh = floored(w.dot(h));
    apply_ratio(w, v.dot(&h.t()), wh.dot(&h.t()), 1.0)
}

pub fn poisson_h_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let wh = floored(w.dot(h));
    let numer = w.t().dot(&(v / &wh));
    // W^T J has constant columns: entry (k, m) is the k-th column sum of W.
    let denom = w
        .sum_axis(Axis(0))
        .insert_axis(Axis(1))
        .broadcast(numer.dim())
        .expect("broadcast column sums")
        .to_owned();
    apply_ratio(h, numer, denom, 1.0)
}

pub fn poisson_w_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let wh = floored(w.dot(h));
    let numer = (v / &wh).dot(&h.t());
    let denom = h
        .sum_axis(Axis(1))
        .insert_axis(Axis(0))
        .broadcast(numer.dim())
        .expect("broadcast row sums")
        .to_owned();
    apply_ratio(w, numer, denom, 1.0)
}

pub fn tweedie_h_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>, p: f64) -> Array2<f64> {
    let wh = floored(w.dot(h));
    let ratio = v / &wh.mapv(|x| x.powf(p));
    let numer = w.t().dot(&ratio);
    let denom = w.t().dot(&wh.mapv(|x| x.powf(1.0 - p)));
    apply_ratio(h, numer, denom, gamma_exponent(p))
}

pub fn tweedie_w_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>, p: f64) -> Array2<f64> {
    let wh = floored(w.dot(h));
    let ratio = v / &wh.mapv(|x| x.powf(p));
    let numer = ratio.dot(&h.t());
    let denom = wh.mapv(|x| x.powf(1.0 - p)).dot(&h.t());
    apply_ratio(w, numer, denom, gamma_exponent(p))
}

pub fn negbin_h_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let wh = floored(w.dot(h));
    let numer = w.t().dot(&(v / &wh));
    let shifted = (v + alpha) / (wh + alpha);
    let denom = w.t().dot(&shifted);
    apply_ratio(h, numer, denom, 1.0)
}

pub fn negbin_w_update(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let wh = floored(w.dot(h));
    let numer = (v / &wh).dot(&h.t());
    let shifted = (v + alpha) / (wh + alpha);
    let denom = shifted.dot(&h.t());
    apply_ratio(w, numer, denom, 1.0)
}

// ---------------------------------------------------------------------------
// Convex kernels on V^T ~ V^T E D.
// ---------------------------------------------------------------------------

/// Reconstruction V^T E D, floored away from zero.
fn convex_recon(v: &Array2<f64>, e: &Array2<f64>, d: &Array2<f64>) -> Array2<f64> {
    floored(v.t().dot(e).dot(d))
}

pub fn normal_e_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let recon = convex_recon(v, e, d);
    let numer = v.dot(&v.t().to_owned()).dot(&d.t());
    let denom = v.dot(&recon).dot(&d.t());
    apply_ratio(e, numer, denom, 1.0)
}

pub fn normal_d_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let vte = v.t().dot(e);
    let recon = floored(vte.dot(d));
    let numer = vte.t().dot(&v.t());
    let denom = vte.t().dot(&recon);
    apply_ratio(d, numer, denom, 1.0)
}

pub fn poisson_e_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let recon = convex_recon(v, e, d);
    let ratio = &v.t() / &recon;
    let numer = v.dot(&ratio).dot(&d.t());
    // V J_{M,N} D^T factors into (row sums of V) x (row sums of D).
    let vsum = v.sum_axis(Axis(1)).insert_axis(Axis(1));
    let dsum = d.sum_axis(Axis(1)).insert_axis(Axis(0));
    let denom = vsum.dot(&dsum);
    apply_ratio(e, numer, denom, 1.0)
}

pub fn poisson_d_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let vte = v.t().dot(e);
    let recon = floored(vte.dot(d));
    let ratio = &v.t() / &recon;
    let numer = vte.t().dot(&ratio);
    let denom = vte
        .sum_axis(Axis(0))
        .insert_axis(Axis(1))
        .broadcast(numer.dim())
        .expect("broadcast V^T E column sums")
        .to_owned();
    apply_ratio(d, numer, denom, 1.0)
}

pub fn tweedie_e_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>, p: f64) -> Array2<f64> {
    let recon = convex_recon(v, e, d);
    let ratio = &v.t() / &recon.mapv(|x| x.powf(p));
    let numer = v.dot(&ratio).dot(&d.t());
    let denom = v.dot(&recon.mapv(|x| x.powf(1.0 - p))).dot(&d.t());
    apply_ratio(e, numer, denom, gamma_exponent(p))
}

pub fn tweedie_d_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>, p: f64) -> Array2<f64> {
    let vte = v.t().dot(e);
    let recon = floored(vte.dot(d));
    let ratio = &v.t() / &recon.mapv(|x| x.powf(p));
    let numer = vte.t().dot(&ratio);
    let denom = vte.t().dot(&recon.mapv(|x| x.powf(1.0 - p)));
    apply_ratio(d, numer, denom, gamma_exponent(p))
}

pub fn negbin_e_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let recon = convex_recon(v, e, d);
    let vt = v.t();
    let ratio = &vt / &recon;
    let numer = v.dot(&ratio).dot(&d.t());
    let shifted = (&vt + alpha) / (recon + alpha);
    let denom = v.dot(&shifted).dot(&d.t());
    apply_ratio(e, numer, denom, 1.0)
}

pub fn negbin_d_update(e: &Array2<f64>, d: &Array2<f64>, v: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let vte = v.t().dot(e);
    let recon = floored(vte.dot(d));
    let vt = v.t();
    let ratio = &vt / &recon;
    let numer = vte.t().dot(&ratio);
    let shifted = (&vt + alpha) / (recon + alpha);
    let denom = vte.t().dot(&shifted);
    apply_ratio(d, numer, denom, 1.0)
}

// ---------------------------------------------------------------------------
// Sweeps: features-side factor first, then the weights side against the
// refreshed partner.
// ---------------------------------------------------------------------------

/// One full traditional sweep (H then W) for the engine, returning (W', H').
pub fn sweep_traditional(
    engine: Engine,
    w: &Array2<f64>,
    h: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let h_new = match engine {
        Engine::Normal => normal_h_update(w, h, v),
        Engine::Poisson => poisson_h_update(w, h, v),
        Engine::Tweedie(p) => tweedie_h_update(w, h, v, p),
        Engine::NegBin(alpha) => negbin_h_update(w, h, v, alpha),
    };
    ensure_finite(&h_new, "H update")?;
    let w_new = match engine {
        Engine::Normal => normal_w_update(w, &h_new, v),
        Engine::Poisson => poisson_w_update(w, &h_new, v),
        Engine::Tweedie(p) => tweedie_w_update(w, &h_new, v, p),
        Engine::NegBin(alpha) => negbin_w_update(w, &h_new, v, alpha),
    };
    ensure_finite(&w_new, "W update")?;
    Ok((w_new, h_new))
}

/// One full convex sweep (E then D), returning (E', D').
pub fn sweep_convex(
    engine: Engine,
    e: &Array2<f64>,
    d: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let e_new = match engine {
        Engine::Normal => normal_e_update(e, d, v),
        Engine::Poisson => poisson_e_update(e, d, v),
        Engine::Tweedie(p) => tweedie_e_update(e, d, v, p),
        Engine::NegBin(alpha) => negbin_e_update(e, d, v, alpha),
    };
    ensure_finite(&e_new, "E update")?;
    let d_new = match engine {
        Engine::Normal => normal_d_update(&e_new, d, v),
        Engine::Poisson => poisson_d_update(&e_new, d, v),
        Engine::Tweedie(p) => tweedie_d_update(&e_new, d, v, p),
        Engine::NegBin(alpha) => negbin_d_update(&e_new, d, v, alpha),
    };
    ensure_finite(&d_new, "D update")?;
    Ok((e_new, d_new))
}

/// Tweedie traditional sweep at power p: H then W (generic power path).
pub fn update_traditional_tweedie(
    w: &Array2<f64>,
    h: &Array2<f64>,
    v: &Array2<f64>,
    p: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    crate::model::validate_power(p)?;
    sweep_traditional(Engine::Tweedie(p), w, h, v)
}

/// Negative Binomial traditional sweep: H then W.
pub fn update_traditional_negbin(
    w: &Array2<f64>,
    h: &Array2<f64>,
    v: &Array2<f64>,
    alpha: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if !(alpha > 0.0) {
        return Err(NmfError::NonPositiveAlpha(alpha));
    }
    sweep_traditional(Engine::NegBin(alpha), w, h, v)
}

/// Tweedie convex sweep at power p: E then D.
pub fn update_convex_tweedie(
    e: &Array2<f64>,
    d: &Array2<f64>,
    v: &Array2<f64>,
    p: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    crate::model::validate_power(p)?;
    sweep_convex(Engine::Tweedie(p), e, d, v)
}

/// Negative Binomial convex sweep: E then D.
pub fn update_convex_negbin(
    e: &Array2<f64>,
    d: &Array2<f64>,
    v: &Array2<f64>,
    alpha: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if !(alpha > 0.0) {
        return Err(NmfError::NonPositiveAlpha(alpha));
    }
    sweep_convex(Engine::NegBin(alpha), e, d, v)
}

/// Rescale so every column of V^T E sums to one, with rows of D absorbing the
/// inverse constants; the product V^T E D is unchanged.
pub fn normalize_convex(
    e: &Array2<f64>,
    d: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let vte = v.t().dot(e);
    let sums = vte.sum_axis(Axis(0));
    for (k, &s) in sums.iter().enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            return Err(NmfError::DegenerateColumn(k));
        }
    }
    let mut e_new = e.clone();
    for (mut col, &s) in e_new.columns_mut().into_iter().zip(sums.iter()) {
        col.mapv_inplace(|x| x / s);
    }
    let mut d_new = d.clone();
    for (mut row, &s) in d_new.rows_mut().into_iter().zip(sums.iter()) {
        row.mapv_inplace(|x| x * s);
    }
    Ok((e_new, d_new))
}

// ---------------------------------------------------------------------------
// Fit driver.
// ---------------------------------------------------------------------------

/// Stopping and restart configuration for [`fit`].
///
/// `tol` is the absolute divergence-change threshold; `None` uses
/// 1e-6 times the divergence after the first sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub init_scale: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol: None,
            max_iter: 10_000,
            restarts: 5,
            seed: 0,
            init_scale: None,
        }
    }
}

/// Factor pair of a fitted model.
#[derive(Debug, Clone)]
pub enum Factors {
    Traditional { w: Array2<f64>, h: Array2<f64> },
    Convex { e: Array2<f64>, d: Array2<f64> },
}

/// Result of an alternating fit: factors, reconstruction, and the divergence
/// trajectory of the winning restart.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub variant: Variant,
    pub factors: Factors,
    /// Reconstruction of V (N x M) regardless of variant.
    pub fitted: Array2<f64>,
    /// Divergence after initialisation (index 0) and after each sweep.
    pub divergence_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl Factorization {
    pub fn final_divergence(&self) -> f64 {
        *self.divergence_trace.last().expect("trace is never empty")
    }

    /// Feature matrix (K x M): H for traditional, (V^T E)^T for convex.
    pub fn features(&self, v: &DataMatrix) -> Array2<f64> {
        match &self.factors {
            Factors::Traditional { h, .. } => h.clone(),
            Factors::Convex { e, .. } => v.values().t().dot(e).t().to_owned(),
        }
    }

    /// Weight matrix (N x K): W for traditional, D^T for convex.
    pub fn weights(&self) -> Array2<f64> {
        match &self.factors {
            Factors::Traditional { w, .. } => w.clone(),
            Factors::Convex { d, .. } => d.t().to_owned(),
        }
    }
}

/// Draw strictly positive uniform factors, scaled so the initial
/// reconstruction has roughly the data mean.
pub fn init_factors(
    v: &DataMatrix,
    k: usize,
    variant: Variant,
    seed: u64,
    init_scale: Option<f64>,
) -> Factors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = v.n_rows();
    let m = v.n_cols();
    // (1 - u) maps the [0, 1) draw onto (0, 1], keeping entries positive.
    let mut draw = |rows: usize, cols: usize, scale: f64| {
        Array2::from_shape_fn((rows, cols), |_| scale * (1.0 - rng.random::<f64>()))
    };
    match variant {
        Variant::Traditional => {
            let scale = init_scale.unwrap_or_else(|| (v.mean() / k as f64).sqrt().max(1e-8));
            let w = draw(n, k, scale);
            let h = draw(k, m, scale);
            Factors::Traditional { w, h }
        }
        Variant::Convex => {
            // mean(V^T E D) ~ N K mean(V) (s/2)^2, so s = 2/sqrt(N K) targets mean(V).
            let scale = init_scale.unwrap_or_else(|| 2.0 / ((n * k) as f64).sqrt());
            let e = draw(n, k, scale);
            let d = draw(k, n, scale);
            Factors::Convex { e, d }
        }
    }
}

fn reconstruction(variant: Variant, factors: &Factors, v: &Array2<f64>) -> Array2<f64> {
    match (variant, factors) {
        (Variant::Traditional, Factors::Traditional { w, h }) => w.dot(h),
        (Variant::Convex, Factors::Convex { e, d }) => v.t().dot(e).dot(d).t().to_owned(),
        _ => unreachable!("factor kind always matches variant"),
    }
}

fn validate_fit_inputs(v: &DataMatrix, spec: &ModelSpec, cost: &CostModel) -> Result<usize> {
    let k = spec.require_rank()?;
    if cost.family() != spec.family {
        return Err(NmfError::InvalidInput(format!(
            "cost model family {:?} does not match spec family {:?}",
            cost.family(),
            spec.family
        )));
    }
    if let CostModel::Tweedie { p, .. } = cost {
        crate::model::validate_power(*p)?;
        if *p > MAX_FIT_POWER {
            return Err(NmfError::PowerTooLarge(*p));
        }
    }
    if let CostModel::NegBin { alpha } = cost {
        if !(*alpha > 0.0) {
            return Err(NmfError::NonPositiveAlpha(*alpha));
        }
    }
    let _ = v;
    Ok(k)
}

/// Alternate the engine's two updates until the divergence change falls below
/// the tolerance, over `restarts` independent seeds, returning the
/// lowest-divergence run (ties broken by lowest seed). Convex factorisations
/// are normalised once after convergence.
pub fn fit(v: &DataMatrix, spec: &ModelSpec, cost: &CostModel, config: &FitConfig) -> Result<Factorization> {
    let k = validate_fit_inputs(v, spec, cost)?;
    let engine = Engine::from_cost(cost);

    let runs: Vec<Result<Factorization>> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            fit_single(v, spec.variant, engine, k, config, seed)
        })
        .collect();

    let mut best: Option<Factorization> = None;
    let mut first_err: Option<NmfError> = None;
    for run in runs {
        match run {
            Ok(candidate) => {
                let better = match &best {
                    None => true,
                    Some(current) => {
                        let (cd, nd) = (current.final_divergence(), candidate.final_divergence());
                        nd < cd || (nd == cd && candidate.seed < current.seed)
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some(fit) => Ok(fit),
        None => Err(first_err.expect("at least one restart ran")),
    }
}

fn fit_single(
    v: &DataMatrix,
    variant: Variant,
    engine: Engine,
    k: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<Factorization> {
    let data = v.values();
    let mut factors = init_factors(v, k, variant, seed, config.init_scale);

    let divergence = |factors: &Factors| -> Result<f64> {
        let recon = reconstruction(variant, factors, data);
        match variant {
            Variant::Traditional => engine.divergence(data.view(), recon.view()),
            Variant::Convex => engine.divergence(data.t(), recon.t()),
        }
    };

    let mut trace = vec![divergence(&factors)?];
    let mut converged = false;
    let mut threshold = config.tol;

    for _ in 1..=config.max_iter {
        factors = match &factors {
            Factors::Traditional { w, h } => {
                let (w, h) = sweep_traditional(engine, w, h, data)?;
                Factors::Traditional { w, h }
            }
            Factors::Convex { e, d } => {
                let (e, d) = sweep_convex(engine, e, d, data)?;
                Factors::Convex { e, d }
            }
        };
        let current = divergence(&factors)?;
        let previous = *trace.last().expect("trace non-empty");
        if current > previous + 1e-12 * previous.abs().max(1.0) {
            log::warn!(
                "divergence increased from {previous} to {current}; monotone descent violated"
            );
        }
        trace.push(current);
        let eps = *threshold.get_or_insert_with(|| 1e-6 * trace[1]);
        if (current - previous).abs() < eps {
            converged = true;
            break;
        }
    }

    if let Factors::Convex { e, d } = &factors {
        let (e, d) = normalize_convex(e, d, data)?;
        factors = Factors::Convex { e, d };
    }
    let fitted = reconstruction(variant, &factors, data);
    Ok(Factorization {
        variant,
        factors,
        fitted,
        iterations: trace.len() - 1,
        converged,
        divergence_trace: trace,
        seed,
    })
}
