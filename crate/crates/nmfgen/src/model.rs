//! Domain types and the compact model-spec notation.
//!
//! A model is described by a string of the form
//! `NMF/<T|C>/<N|Po|TW[_p]|NB[_a]>[/K]`, e.g. `NMF/T/TW_2/3` for traditional
//! NMF of rank 3 under the Tweedie cost with power 2. A missing parameter on
//! `TW`/`NB` means "estimate it from the data"; the rank segment may be
//! omitted when no rank is fixed yet.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{NmfError, Result};

/// Factorisation structure: `V ≈ WH` or `V^T ≈ V^T E D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    Traditional,
    Convex,
}

/// Distribution family selecting the cost function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    Normal,
    Poisson,
    Tweedie,
    NegBin,
}

impl Family {
    /// True for the families that carry an estimated parameter (p or alpha).
    pub fn has_family_param(self) -> bool {
        matches!(self, Family::Tweedie | Family::NegBin)
    }
}

/// Parsed model description.
///
/// `family_param` is the Tweedie power p or the Negative Binomial dispersion
/// alpha; `None` requests estimation from the data. `rank` is `None` when the
/// spec deliberately omits it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub family: Family,
    pub family_param: Option<f64>,
    pub rank: Option<usize>,
}

impl ModelSpec {
    pub fn new(variant: Variant, family: Family, family_param: Option<f64>, rank: Option<usize>) -> Self {
        ModelSpec {
            variant,
            family,
            family_param,
            rank,
        }
    }

    /// The rank, or an error when the spec omitted it.
    pub fn require_rank(&self) -> Result<usize> {
        self.rank.ok_or(NmfError::MissingRank)
    }

    /// Copy of this spec with the family parameter replaced.
    pub fn with_param(mut self, param: f64) -> Self {
        self.family_param = Some(param);
        self
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = Some(rank);
        self
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_model_spec(self))
    }
}

/// Parse the model notation, validating parameter ranges.
pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    let syntax = || NmfError::SpecSyntax(text.to_string());
    let mut parts = text.split('/');

    if parts.next() != Some("NMF") {
        return Err(syntax());
    }
    let variant = match parts.next() {
        Some("T") => Variant::Traditional,
        Some("C") => Variant::Convex,
        _ => return Err(syntax()),
    };

    let family_token = parts.next().ok_or_else(syntax)?;
    let (family, family_param) = parse_family_token(family_token, text)?;

    let rank = match parts.next() {
        None => None,
        Some(tok) => {
            let k: i64 = tok.parse().map_err(|_| syntax())?;
            if k <= 0 {
                return Err(NmfError::RankNotPositive(k));
            }
            Some(k as usize)
        }
    };

    if parts.next().is_some() {
        return Err(syntax());
    }

    Ok(ModelSpec {
        variant,
        family,
        family_param,
        rank,
    })
}

fn parse_family_token(token: &str, full: &str) -> Result<(Family, Option<f64>)> {
    let syntax = || NmfError::SpecSyntax(full.to_string());
    match token {
        "N" => return Ok((Family::Normal, None)),
        "Po" => return Ok((Family::Poisson, None)),
        "TW" => return Ok((Family::Tweedie, None)),
        "NB" => return Ok((Family::NegBin, None)),
        _ => {}
    }
    if let Some(raw) = token.strip_prefix("TW_") {
        let p: f64 = raw.parse().map_err(|_| syntax())?;
        validate_power(p)?;
        return Ok((Family::Tweedie, Some(p)));
    }
    if let Some(raw) = token.strip_prefix("NB_") {
        let alpha: f64 = raw.parse().map_err(|_| syntax())?;
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(NmfError::NonPositiveAlpha(alpha));
        }
        return Ok((Family::NegBin, Some(alpha)));
    }
    Err(syntax())
}

/// Reject powers outside {0} ∪ [1, ∞); p ∈ (0,1) is undefined and p < 0 unsupported.
pub fn validate_power(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(NmfError::NonFinite("Tweedie power"));
    }
    if p < 0.0 {
        return Err(NmfError::NegativePower(p));
    }
    if p > 0.0 && p < 1.0 {
        return Err(NmfError::PowerInForbiddenInterval(p));
    }
    Ok(())
}

/// Render a spec back into the notation. Inverse of [`parse_model_spec`].
pub fn format_model_spec(spec: &ModelSpec) -> String {
    let variant = match spec.variant {
        Variant::Traditional => "T",
        Variant::Convex => "C",
    };
    let family = match (spec.family, spec.family_param) {
        (Family::Normal, _) => "N".to_string(),
        (Family::Poisson, _) => "Po".to_string(),
        (Family::Tweedie, None) => "TW".to_string(),
        (Family::Tweedie, Some(p)) => format!("TW_{p}"),
        (Family::NegBin, None) => "NB".to_string(),
        (Family::NegBin, Some(a)) => format!("NB_{a}"),
    };
    match spec.rank {
        Some(k) => format!("NMF/{variant}/{family}/{k}"),
        None => format!("NMF/{variant}/{family}"),
    }
}

/// Number of free parameters counted by BIC.
///
/// Traditional: NK + M(K-1); convex: NK + N(K-1); plus one for the estimated
/// family parameter of Tweedie and Negative Binomial models. The Normal
/// variance is not counted.
pub fn free_parameter_count(spec: &ModelSpec, n: usize, m: usize) -> Result<usize> {
    let k = spec.require_rank()?;
    let base = match spec.variant {
        Variant::Traditional => n * k + m * (k - 1),
        Variant::Convex => n * k + n * (k - 1),
    };
    Ok(base + usize::from(spec.family.has_family_param()))
}

/// Storage layout the data arrived in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Storage {
    Dense,
    SparseCoordinate,
}

/// Non-negative observation matrix with sparsity metadata and optional labels.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
    storage: Storage,
    sparsity: f64,
    pub row_labels: Option<Vec<String>>,
    pub col_labels: Option<Vec<String>>,
}

impl DataMatrix {
    /// Validate and wrap a dense array: all entries must be finite and >= 0.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::with_storage(values, Storage::Dense)
    }

    pub fn with_storage(values: Array2<f64>, storage: Storage) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(NmfError::EmptyMatrix);
        }
        let mut zeros = 0usize;
        for ((row, col), &value) in values.indexed_iter() {
            if !value.is_finite() {
                return Err(NmfError::FieldParse {
                    row,
                    field: format!("{value}"),
                });
            }
            if value < 0.0 {
                return Err(NmfError::NegativeEntry { row, col, value });
            }
            if value == 0.0 {
                zeros += 1;
            }
        }
        let sparsity = zeros as f64 / (values.nrows() * values.ncols()) as f64;
        Ok(DataMatrix {
            values,
            storage,
            sparsity,
            row_labels: None,
            col_labels: None,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    /// Fraction of exactly-zero entries.
    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn is_sparse(&self) -> bool {
        self.sparsity > 0.0
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }
}

/// Distribution family with resolved parameters; selects deviance, likelihood
/// and variance evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CostModel {
    Normal { sigma2: f64 },
    Poisson,
    Tweedie { p: f64, sigma2: f64 },
    NegBin { alpha: f64 },
}

impl CostModel {
    pub fn family(&self) -> Family {
        match self {
            CostModel::Normal { .. } => Family::Normal,
            CostModel::Poisson => Family::Poisson,
            CostModel::Tweedie { .. } => Family::Tweedie,
            CostModel::NegBin { .. } => Family::NegBin,
        }
    }

    /// Tweedie power of the mean-variance law; Normal is 0, Poisson 1.
    pub fn power(&self) -> Option<f64> {
        match self {
            CostModel::Normal { .. } => Some(0.0),
            CostModel::Poisson => Some(1.0),
            CostModel::Tweedie { p, .. } => Some(*p),
            CostModel::NegBin { .. } => None,
        }
    }

    pub fn family_param(&self) -> Option<f64> {
        match self {
            CostModel::Tweedie { p, .. } => Some(*p),
            CostModel::NegBin { alpha } => Some(*alpha),
            _ => None,
        }
    }

    /// Model variance at mean `mu`.
    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            CostModel::Normal { sigma2 } => *sigma2,
            CostModel::Poisson => mu,
            CostModel::Tweedie { p, sigma2 } => sigma2 * mu.powf(*p),
            CostModel::NegBin { alpha } => mu * (1.0 + mu / alpha),
        }
    }

    /// Spec string for reports: the input spec with the fitted parameter filled in.
    pub fn resolved_spec(&self, spec: &ModelSpec) -> ModelSpec {
        let mut out = *spec;
        if let Some(param) = self.family_param() {
            if spec.family.has_family_param() {
                out.family_param = Some(param);
            }
        }
        out
    }
}
