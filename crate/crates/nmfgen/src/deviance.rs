//! Unit deviances, divergences and log-densities for the four cost families.
//!
//! The Tweedie family covers Normal (p = 0), Poisson (p = 1), compound
//! Poisson-Gamma (1 < p < 2), Gamma (p = 2) and inverse Gaussian (p = 3).
//! Deviance evaluation is defined for p = 0 and p >= 1; the log-density is
//! additionally restricted to powers where the normalising factor is
//! tractable: the closed-form rows above plus the compound-Poisson series.

use ndarray::ArrayView2;
use statrs::function::gamma::ln_gamma;

use crate::error::{NmfError, Result};
use crate::model::{validate_power, CostModel, DataMatrix};
use crate::numeric::CompensatedSum;

/// Maximum number of series terms before reporting non-convergence.
const SERIES_MAX_TERMS: usize = 100_000;
/// Relative increment below which the series sum is considered converged.
const SERIES_REL_TOL: f64 = 1e-14;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// x * ln(x / y) with the 0 * log 0 := 0 convention.
#[inline]
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

fn check_scalar_support(x: f64, p: f64) -> Result<()> {
    let ok = if p == 0.0 {
        true
    } else if p < 2.0 {
        x >= 0.0
    } else {
        x > 0.0
    };
    if ok {
        Ok(())
    } else {
        Err(NmfError::OutOfSupport { x, p })
    }
}

/// Tweedie unit deviance d_p(x; mu).
///
/// Zero exactly when x = mu; the Poisson branch uses 0*log 0 := 0 so that
/// d_1(0; mu) = 2 mu.
pub fn unit_deviance(x: f64, mu: f64, p: f64) -> Result<f64> {
    validate_power(p)?;
    if !x.is_finite() || !mu.is_finite() {
        return Err(NmfError::NonFinite("unit deviance input"));
    }
    if mu <= 0.0 {
        return Err(NmfError::OutOfSupport { x: mu, p });
    }
    check_scalar_support(x, p)?;

    let d = if p == 0.0 {
        let r = x - mu;
        r * r
    } else if p == 1.0 {
        2.0 * (xlogx_over(x, mu) - x + mu)
    } else if p == 2.0 {
        2.0 * (x / mu - (x / mu).ln() - 1.0)
    } else {
        2.0 * (x.powf(2.0 - p) / ((1.0 - p) * (2.0 - p)) - x * mu.powf(1.0 - p) / (1.0 - p)
            + mu.powf(2.0 - p) / (2.0 - p))
    };
    Ok(d)
}

/// True when the density normaliser is available for this power.
pub fn density_supported(p: f64) -> bool {
    p == 0.0 || p == 3.0 || (1.0..=2.0).contains(&p)
}

/// Tweedie log-density ln f(x; mu, sigma2) for p in {0, 1, 2, 3} or (1, 2).
///
/// For 1 < p < 2 the normaliser is evaluated through the compound-Poisson
/// series; the point mass at zero is exp(-mu^(2-p) / (sigma2 (2-p))).
pub fn tweedie_log_density(x: f64, mu: f64, p: f64, sigma2: f64) -> Result<f64> {
    validate_power(p)?;
    if !x.is_finite() || !mu.is_finite() || !sigma2.is_finite() {
        return Err(NmfError::NonFinite("log-density input"));
    }
    if mu <= 0.0 || sigma2 <= 0.0 {
        return Err(NmfError::OutOfSupport { x: mu.min(sigma2), p });
    }
    if !density_supported(p) {
        return Err(NmfError::UnsupportedDensityPower(p));
    }

    if p == 0.0 {
        let r = x - mu;
        return Ok(-0.5 * (LN_2PI + sigma2.ln()) - r * r / (2.0 * sigma2));
    }
    if p == 1.0 {
        // Poisson regime: the dispersion is pinned to one.
        if (sigma2 - 1.0).abs() > 1e-12 {
            return Err(NmfError::InvalidInput(format!(
                "Poisson density (p = 1) requires sigma2 = 1, got {sigma2}"
            )));
        }
        check_scalar_support(x, p)?;
        return Ok(x * mu.ln() - mu - ln_gamma(x + 1.0));
    }
    if p == 2.0 {
        check_scalar_support(x, p)?;
        let a = 1.0 / sigma2;
        let log_c = -x.ln() - a * sigma2.ln() - a - ln_gamma(a);
        return Ok(log_c - unit_deviance(x, mu, p)? / (2.0 * sigma2));
    }
    if p == 3.0 {
        check_scalar_support(x, p)?;
        let log_c = -0.5 * (LN_2PI + 3.0 * x.ln() + sigma2.ln());
        return Ok(log_c - unit_deviance(x, mu, p)? / (2.0 * sigma2));
    }

    // 1 < p < 2: compound Poisson-Gamma.
    check_scalar_support(x, p)?;
    if x == 0.0 {
        return Ok(-mu.powf(2.0 - p) / (sigma2 * (2.0 - p)));
    }
    let exponent = (x * mu.powf(1.0 - p) / (1.0 - p) - mu.powf(2.0 - p) / (2.0 - p)) / sigma2;
    let log_w = compound_poisson_log_w(x, p, sigma2)?;
    Ok(-x.ln() + exponent + log_w)
}

/// ln of the series W(x, sigma2, p) = sum_j W_j in the compound-Poisson
/// density. The terms are summed outward from the index maximising W_j,
/// in ratio to that anchor term, until the relative increment falls below
/// `SERIES_REL_TOL`.
fn compound_poisson_log_w(x: f64, p: f64, sigma2: f64) -> Result<f64> {
    let alpha_g = (2.0 - p) / (p - 1.0);
    let log_term = |j: f64| -> f64 {
        j * alpha_g * x.ln() - j * alpha_g * (p - 1.0).ln()
            - j * (1.0 + alpha_g) * sigma2.ln()
            - j * (2.0 - p).ln()
            - ln_gamma(j + 1.0)
            - ln_gamma(j * alpha_g)
    };

    let j_peak = (x.powf(2.0 - p) / (sigma2 * (2.0 - p))).max(1.0);
    let j0 = j_peak.round().max(1.0);
    let anchor = log_term(j0);
    if !anchor.is_finite() {
        return Err(NmfError::NonFinite("compound-Poisson series anchor"));
    }

    let mut sum = 1.0; // anchor term, in units of exp(anchor)
    let mut terms = 1usize;

    let mut j = j0 + 1.0;
    loop {
        let r = (log_term(j) - anchor).exp();
        sum += r;
        terms += 1;
        if r < sum * SERIES_REL_TOL {
            break;
        }
        if terms >= SERIES_MAX_TERMS {
            return Err(NmfError::SeriesNonConvergence { x, terms });
        }
        j += 1.0;
    }
    j = j0 - 1.0;
    while j >= 1.0 {
        let r = (log_term(j) - anchor).exp();
        sum += r;
        terms += 1;
        if r < sum * SERIES_REL_TOL {
            break;
        }
        if terms >= SERIES_MAX_TERMS {
            return Err(NmfError::SeriesNonConvergence { x, terms });
        }
        j -= 1.0;
    }

    Ok(anchor + sum.ln())
}

fn check_shapes(v: ArrayView2<f64>, vhat: ArrayView2<f64>) -> Result<()> {
    if v.dim() != vhat.dim() {
        return Err(NmfError::ShapeMismatch {
            expected: v.dim(),
            got: vhat.dim(),
        });
    }
    Ok(())
}

/// Sum of unit deviances over all entries; support violations are reported
/// with the offending index.
pub fn tweedie_divergence(v: ArrayView2<f64>, vhat: ArrayView2<f64>, p: f64) -> Result<f64> {
    check_shapes(v, vhat)?;
    let mut acc = CompensatedSum::new();
    for ((row, col), &mu) in vhat.indexed_iter() {
        let x = v[(row, col)];
        let d = unit_deviance(x, mu, p).map_err(|e| match e {
            NmfError::OutOfSupport { x, p } => NmfError::SupportViolation { x, p, row, col },
            other => other,
        })?;
        acc.add(d);
    }
    Ok(acc.value())
}

/// Negative Binomial divergence of Eq-style form
/// sum { x ln(x/mu) - (alpha + x) ln((alpha + x)/(alpha + mu)) }.
pub fn negbin_divergence(v: ArrayView2<f64>, vhat: ArrayView2<f64>, alpha: f64) -> Result<f64> {
    check_shapes(v, vhat)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(NmfError::NonPositiveAlpha(alpha));
    }
    let mut acc = CompensatedSum::new();
    for ((row, col), &mu) in vhat.indexed_iter() {
        if mu <= 0.0 {
            return Err(NmfError::NonPositiveEntry { row, col, value: mu });
        }
        let x = v[(row, col)];
        acc.add(xlogx_over(x, mu) - (alpha + x) * ((alpha + x) / (alpha + mu)).ln());
    }
    Ok(acc.value())
}

fn check_counts(v: ArrayView2<f64>) -> Result<()> {
    for ((row, col), &x) in v.indexed_iter() {
        if x < 0.0 || (x - x.round()).abs() > 1e-9 {
            return Err(NmfError::NonIntegerCount { row, col, value: x });
        }
    }
    Ok(())
}

/// Full Negative Binomial log-likelihood including the binomial-coefficient
/// term, written with log-Gamma so non-integer alpha is supported.
pub fn negbin_log_likelihood(v: ArrayView2<f64>, vhat: ArrayView2<f64>, alpha: f64) -> Result<f64> {
    check_shapes(v, vhat)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(NmfError::NonPositiveAlpha(alpha));
    }
    check_counts(v)?;
    let ln_gamma_alpha = ln_gamma(alpha);
    let mut acc = CompensatedSum::new();
    for ((row, col), &mu) in vhat.indexed_iter() {
        if mu <= 0.0 {
            return Err(NmfError::NonPositiveEntry { row, col, value: mu });
        }
        let x = v[(row, col)];
        let coeff = ln_gamma(x + alpha) - ln_gamma_alpha - ln_gamma(x + 1.0);
        let mean_terms = alpha * (alpha / (alpha + mu)).ln()
            + if x == 0.0 { 0.0 } else { x * (mu / (alpha + mu)).ln() };
        acc.add(coeff + mean_terms);
    }
    Ok(acc.value())
}

/// Family dispatch for the full log-likelihood consumed by BIC and the
/// profile-likelihood estimators.
pub fn log_likelihood(v: &DataMatrix, vhat: ArrayView2<f64>, cost: &CostModel) -> Result<f64> {
    let data = v.values().view();
    check_shapes(data, vhat)?;
    match cost {
        CostModel::Normal { sigma2 } => {
            if !(*sigma2 > 0.0) {
                return Err(NmfError::InvalidInput(format!(
                    "Normal log-likelihood requires sigma2 > 0, got {sigma2}"
                )));
            }
            let mut acc = CompensatedSum::new();
            let log_norm = -0.5 * (LN_2PI + sigma2.ln());
            for (&x, &mu) in data.iter().zip(vhat.iter()) {
                let r = x - mu;
                acc.add(log_norm - r * r / (2.0 * sigma2));
            }
            Ok(acc.value())
        }
        CostModel::Poisson => {
            let mut acc = CompensatedSum::new();
            for ((row, col), &mu) in vhat.indexed_iter() {
                if mu <= 0.0 {
                    return Err(NmfError::NonPositiveEntry { row, col, value: mu });
                }
                let x = data[(row, col)];
                acc.add(if x == 0.0 { -mu } else { x * mu.ln() - mu - ln_gamma(x + 1.0) });
            }
            Ok(acc.value())
        }
        CostModel::Tweedie { p, sigma2 } => {
            let mut acc = CompensatedSum::new();
            for ((row, col), &mu) in vhat.indexed_iter() {
                let x = data[(row, col)];
                let ld = tweedie_log_density(x, mu, *p, *sigma2).map_err(|e| match e {
                    NmfError::OutOfSupport { x, p } => NmfError::SupportViolation { x, p, row, col },
                    other => other,
                })?;
                acc.add(ld);
            }
            Ok(acc.value())
        }
        CostModel::NegBin { alpha } => negbin_log_likelihood(data, vhat, *alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn unit_deviance_normal_is_squared_error() {
        assert_abs_diff_eq!(unit_deviance(3.0, 1.0, 0.0).unwrap(), 4.0);
    }

    #[test]
    fn unit_deviance_vanishes_at_mean() {
        assert_abs_diff_eq!(unit_deviance(5.0, 5.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(unit_deviance(2.5, 2.5, 1.7).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn unit_deviance_compound_poisson_value() {
        // d_{1.5}(2; 1) = 2 [ 2^{0.5}/(-0.25) + 2/0.5·... ] = 12 - 8 sqrt(2)
        let expected = 12.0 - 8.0 * 2.0_f64.sqrt();
        assert_abs_diff_eq!(unit_deviance(2.0, 1.0, 1.5).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.686292, epsilon = 1e-6);
    }

    #[test]
    fn unit_deviance_poisson_zero_convention() {
        assert_abs_diff_eq!(unit_deviance(0.0, 3.0, 1.0).unwrap(), 6.0);
    }

    #[test]
    fn unit_deviance_inverse_gaussian_matches_closed_form() {
        let (x, mu): (f64, f64) = (2.0, 3.0);
        let closed = (x.sqrt() / mu - 1.0 / x.sqrt()).powi(2);
        assert_abs_diff_eq!(unit_deviance(x, mu, 3.0).unwrap(), closed, epsilon = 1e-12);
    }

    #[test]
    fn unit_deviance_rejects_out_of_support() {
        assert!(matches!(
            unit_deviance(0.0, 1.0, 2.0),
            Err(NmfError::OutOfSupport { .. })
        ));
        assert!(matches!(
            unit_deviance(1.0, 1.0, 0.5),
            Err(NmfError::PowerInForbiddenInterval(_))
        ));
        assert!(unit_deviance(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn log_density_standard_normal_at_mean() {
        let ld = tweedie_log_density(2.0, 2.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(ld, -0.9189385332046727, epsilon = 1e-9);
    }

    #[test]
    fn log_density_poisson_pmf() {
        let ld = tweedie_log_density(3.0, 2.0, 1.0, 1.0).unwrap();
        let expected = 3.0 * 2.0_f64.ln() - 2.0 - 6.0_f64.ln();
        assert_abs_diff_eq!(ld, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(ld, -1.712318, epsilon = 1e-6);
    }

    #[test]
    fn log_density_poisson_requires_unit_dispersion() {
        assert!(tweedie_log_density(3.0, 2.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn log_density_compound_poisson_zero_mass() {
        let ld = tweedie_log_density(0.0, 1.0, 1.5, 1.0).unwrap();
        assert_abs_diff_eq!(ld, -2.0, epsilon = 1e-12);
    }

    /// Independent route: sum the Poisson-Gamma mixture directly.
    fn mixture_log_density(x: f64, mu: f64, p: f64, sigma2: f64) -> f64 {
        let lambda = mu.powf(2.0 - p) / (sigma2 * (2.0 - p));
        let shape = (2.0 - p) / (p - 1.0);
        let scale = sigma2 * (p - 1.0) * mu.powf(p - 1.0);
        let mut acc = 0.0;
        for j in 1..400 {
            let jf = j as f64;
            let log_po = -lambda + jf * lambda.ln() - ln_gamma(jf + 1.0);
            let log_gamma_pdf = (jf * shape - 1.0) * x.ln() - x / scale
                - ln_gamma(jf * shape)
                - jf * shape * scale.ln();
            acc += (log_po + log_gamma_pdf).exp();
        }
        acc.ln()
    }

    #[test]
    fn log_density_series_matches_direct_mixture() {
        for &(x, mu, p, sigma2) in &[
            (1.0, 1.0, 1.5, 1.0),
            (0.3, 2.0, 1.3, 0.7),
            (7.5, 4.0, 1.8, 2.0),
            (12.0, 10.0, 1.5, 0.5),
        ] {
            let series = tweedie_log_density(x, mu, p, sigma2).unwrap();
            let direct = mixture_log_density(x, mu, p, sigma2);
            assert_abs_diff_eq!(series, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn gamma_density_at_unit_dispersion_is_exponential() {
        // sigma2 = 1 makes Tw_2(mu, 1) the Exponential with mean mu.
        let ld = tweedie_log_density(3.0, 2.0, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(ld, -3.0 / 2.0 - 2.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn divergence_zero_at_equality_and_squared_error() {
        let v = array![[1.0, 2.0], [3.0, 4.0]];
        assert_abs_diff_eq!(tweedie_divergence(v.view(), v.view(), 1.5).unwrap(), 0.0, epsilon = 1e-14);
        let a = array![[1.0, 2.0]];
        let b = array![[2.0, 2.0]];
        assert_abs_diff_eq!(tweedie_divergence(a.view(), b.view(), 0.0).unwrap(), 1.0);
    }

    #[test]
    fn divergence_matches_scalar_sum() {
        let v = array![[1.0, 2.5], [0.5, 4.0]];
        let vhat = array![[1.5, 2.0], [0.7, 3.2]];
        for &p in &[0.0, 1.0, 1.5, 2.0, 3.0] {
            let mut plain = 0.0;
            for (x, mu) in v.iter().zip(vhat.iter()) {
                plain += unit_deviance(*x, *mu, p).unwrap();
            }
            assert_abs_diff_eq!(tweedie_divergence(v.view(), vhat.view(), p).unwrap(), plain, epsilon = 1e-12);
        }
    }

    #[test]
    fn divergence_reports_offending_index() {
        let v = array![[1.0, 0.0]];
        let vhat = array![[1.0, 1.0]];
        match tweedie_divergence(v.view(), vhat.view(), 2.0) {
            Err(NmfError::SupportViolation { row, col, .. }) => {
                assert_eq!((row, col), (0, 1));
            }
            other => panic!("expected support violation, got {other:?}"),
        }
    }

    #[test]
    fn negbin_divergence_scalar_value() {
        let v = array![[2.0]];
        let vhat = array![[1.0]];
        let expected = 2.0 * 2.0_f64.ln() - 3.0 * 1.5_f64.ln();
        assert_abs_diff_eq!(negbin_divergence(v.view(), vhat.view(), 1.0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.169899, epsilon = 1e-6);
    }

    #[test]
    fn negbin_divergence_zero_iff_equal() {
        let v = array![[1.0, 2.0], [3.0, 0.0]];
        let mut vhat = v.clone();
        vhat.mapv_inplace(|x: f64| x.max(1e-12));
        assert_abs_diff_eq!(negbin_divergence(v.view(), vhat.view(), 2.0).unwrap(), 0.0, epsilon = 1e-9);
        let other = array![[1.5, 2.0], [3.0, 0.5]];
        assert!(negbin_divergence(v.view(), other.view(), 2.0).unwrap() > 0.0);
    }

    #[test]
    fn negbin_divergence_poisson_limit() {
        let v = array![[3.0, 0.0, 7.0], [1.0, 5.0, 2.0]];
        let vhat = array![[2.5, 0.8, 6.0], [1.5, 4.0, 2.5]];
        let nb = negbin_divergence(v.view(), vhat.view(), 1e8).unwrap();
        let kl = tweedie_divergence(v.view(), vhat.view(), 1.0).unwrap() / 2.0;
        assert!((nb - kl).abs() / kl < 1e-4, "nb {nb} vs kl {kl}");
    }

    #[test]
    fn negbin_log_likelihood_at_zero() {
        let v = array![[0.0]];
        let vhat = array![[1.0]];
        let ll = negbin_log_likelihood(v.view(), vhat.view(), 1.0).unwrap();
        assert_abs_diff_eq!(ll, -(2.0_f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn negbin_log_likelihood_matches_scalar_pmf() {
        // pmf oracle: C(x + a - 1, x) (a/(a+mu))^a (mu/(a+mu))^x via lgamma
        let v = array![[0.0, 3.0, 1.0], [2.0, 5.0, 0.0], [4.0, 1.0, 2.0]];
        let vhat = array![[0.5, 2.5, 1.5], [2.0, 4.5, 0.7], [3.5, 1.2, 2.2]];
        let alpha = 2.7;
        let mut oracle = 0.0;
        for (x, mu) in v.iter().zip(vhat.iter()) {
            oracle += ln_gamma(x + alpha) - ln_gamma(alpha) - ln_gamma(x + 1.0)
                + alpha * (alpha / (alpha + mu)).ln()
                + x * (mu / (alpha + mu)).ln();
        }
        let ll = negbin_log_likelihood(v.view(), vhat.view(), alpha).unwrap();
        assert_abs_diff_eq!(ll, oracle, epsilon = 1e-10);
    }

    #[test]
    fn negbin_likelihood_maximised_at_observation() {
        let v = array![[3.0, 7.0], [2.0, 5.0]];
        let at_v = negbin_log_likelihood(v.view(), v.view(), 4.0).unwrap();
        for scale in [0.7, 0.9, 1.1, 1.5] {
            let vhat = v.mapv(|x| x * scale);
            let ll = negbin_log_likelihood(v.view(), vhat.view(), 4.0).unwrap();
            assert!(ll < at_v);
        }
    }

    #[test]
    fn negbin_log_likelihood_rejects_non_counts() {
        let v = array![[1.5]];
        let vhat = array![[1.0]];
        assert!(matches!(
            negbin_log_likelihood(v.view(), vhat.view(), 1.0),
            Err(NmfError::NonIntegerCount { .. })
        ));
    }

    #[test]
    fn log_likelihood_normal_at_mean() {
        let v = DataMatrix::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let ll = log_likelihood(&v, v.values().view(), &CostModel::Normal { sigma2: 1.0 }).unwrap();
        assert_abs_diff_eq!(ll, 4.0 * -0.9189385332046727, epsilon = 1e-9);
    }

    #[test]
    fn log_likelihood_poisson_matches_density_sum() {
        let v = DataMatrix::new(array![[3.0, 0.0], [1.0, 5.0]]).unwrap();
        let vhat = array![[2.5, 0.5], [1.5, 4.5]];
        let ll = log_likelihood(&v, vhat.view(), &CostModel::Poisson).unwrap();
        let mut oracle = 0.0;
        for (x, mu) in v.values().iter().zip(vhat.iter()) {
            oracle += tweedie_log_density(*x, *mu, 1.0, 1.0).unwrap();
        }
        assert_abs_diff_eq!(ll, oracle, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_negbin_delegates() {
        let v = DataMatrix::new(array![[3.0, 0.0], [1.0, 5.0]]).unwrap();
        let vhat = array![[2.5, 0.5], [1.5, 4.5]];
        let a = log_likelihood(&v, vhat.view(), &CostModel::NegBin { alpha: 3.0 }).unwrap();
        let b = negbin_log_likelihood(v.values().view(), vhat.view(), 3.0).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn negbin_divergence_is_negated_shifted_log_likelihood() {
        let v = array![[3.0, 0.0], [1.0, 5.0]];
        let vhat1 = array![[2.5, 0.5], [1.5, 4.5]];
        let vhat2 = array![[3.5, 0.2], [0.8, 5.5]];
        let alpha = 2.0;
        let dll = negbin_log_likelihood(v.view(), vhat1.view(), alpha).unwrap()
            - negbin_log_likelihood(v.view(), vhat2.view(), alpha).unwrap();
        let ddiv = negbin_divergence(v.view(), vhat1.view(), alpha).unwrap()
            - negbin_divergence(v.view(), vhat2.view(), alpha).unwrap();
        assert_abs_diff_eq!(dll, -ddiv, epsilon = 1e-10);
    }
}
