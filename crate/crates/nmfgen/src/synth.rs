//! Synthetic data with planted factors, sampled entrywise from the model
//! families at the planted means.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use crate::error::{NmfError, Result};
use crate::model::DataMatrix;

/// Sampling family for [`synth`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthFamily {
    /// Gaussian noise truncated at zero by resampling.
    Normal { sigma2: f64 },
    Poisson,
    NegBin { alpha: f64 },
    /// Tweedie with 1 < p < 2, sampled exactly as Poisson-many Gamma jumps.
    CompoundPoisson { p: f64, sigma2: f64 },
}

/// Planted factorisation plus the sampled observation matrix.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub v: DataMatrix,
    pub w: Array2<f64>,
    pub h: Array2<f64>,
}

/// Draw planted factors uniformly, scale them so mean(W H) hits
/// `target_mean`, then sample V entrywise from `family` at those means.
/// Fully reproducible from `seed`.
pub fn synth(
    n: usize,
    m: usize,
    k: usize,
    family: SynthFamily,
    target_mean: f64,
    seed: u64,
) -> Result<SynthData> {
    if n == 0 || m == 0 || k == 0 {
        return Err(NmfError::EmptyMatrix);
    }
    if !(target_mean > 0.0) {
        return Err(NmfError::InvalidInput(format!(
            "target mean must be positive, got {target_mean}"
        )));
    }
    match family {
        SynthFamily::Normal { sigma2 } | SynthFamily::CompoundPoisson { sigma2, .. }
            if !(sigma2 > 0.0) =>
        {
            return Err(NmfError::InvalidInput(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        SynthFamily::NegBin { alpha } if !(alpha > 0.0) => {
            return Err(NmfError::NonPositiveAlpha(alpha));
        }
        SynthFamily::CompoundPoisson { p, .. } if !(p > 1.0 && p < 2.0) => {
            return Err(NmfError::InvalidInput(format!(
                "compound-Poisson power must lie in (1, 2), got {p}"
            )));
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((n, k), |_| 1.0 - rng.random::<f64>());
    let mut h = Array2::from_shape_fn((k, m), |_| 1.0 - rng.random::<f64>());
    let planted_mean = w.dot(&h).mean().expect("non-empty product");
    let scale = (target_mean / planted_mean).sqrt();
    w.mapv_inplace(|x| x * scale);
    h.mapv_inplace(|x| x * scale);

    let means = w.dot(&h);
    let mut values = Array2::zeros((n, m));
    for (idx, &mu) in means.indexed_iter() {
        values[idx] = sample_entry(&mut rng, family, mu)?;
    }

    Ok(SynthData {
        v: DataMatrix::new(values)?,
        w,
        h,
    })
}

fn sample_entry(rng: &mut ChaCha8Rng, family: SynthFamily, mu: f64) -> Result<f64> {
    let draw = match family {
        SynthFamily::Normal { sigma2 } => {
            let normal = Normal::new(mu, sigma2.sqrt()).map_err(|e| {
                NmfError::InvalidInput(format!("normal sampler: {e}"))
            })?;
            // Truncate at zero by resampling.
            loop {
                let x = normal.sample(rng);
                if x >= 0.0 {
                    break x;
                }
            }
        }
        SynthFamily::Poisson => sample_poisson(rng, mu)?,
        SynthFamily::NegBin { alpha } => {
            // Gamma-Poisson mixture: lambda ~ Gamma(alpha, mu/alpha), X ~ Po(lambda).
            if mu == 0.0 {
                0.0
            } else {
                let gamma = Gamma::new(alpha, mu / alpha).map_err(|e| {
                    NmfError::InvalidInput(format!("gamma sampler: {e}"))
                })?;
                let lambda = gamma.sample(rng);
                sample_poisson(rng, lambda)?
            }
        }
        SynthFamily::CompoundPoisson { p, sigma2 } => {
            let lambda = mu.powf(2.0 - p) / (sigma2 * (2.0 - p));
            let jumps = sample_poisson(rng, lambda)?;
            if jumps == 0.0 {
                0.0
            } else {
                // Sum of n iid Gamma(shape, scale) draws is Gamma(n shape, scale).
                let shape = (2.0 - p) / (p - 1.0);
                let tau = sigma2 * (p - 1.0) * mu.powf(p - 1.0);
                let gamma = Gamma::new(jumps * shape, tau).map_err(|e| {
                    NmfError::InvalidInput(format!("gamma sampler: {e}"))
                })?;
                gamma.sample(rng)
            }
        }
    };
    Ok(draw)
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let poisson =
        Poisson::new(lambda).map_err(|e| NmfError::InvalidInput(format!("poisson sampler: {e}")))?;
    Ok(poisson.sample(rng))
}
