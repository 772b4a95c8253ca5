//! Traditional and convex non-negative matrix factorisation under Normal,
//! Poisson, Tweedie and Negative Binomial cost functions.
//!
//! The factorisation engines use majorize-minimise multiplicative updates,
//! so each sweep is closed form and the tracked divergence never increases.
//! Around them the crate provides dispersion and power estimation, residual
//! and BIC diagnostics, factor comparison via optimal assignment, synthetic
//! data generation and file I/O for the CLI.

pub mod deviance;
pub mod diagnose;
pub mod error;
pub mod estimate;
pub mod factorize;
pub mod io;
pub mod model;
pub mod numeric;
pub mod synth;
pub mod timing;

pub use error::{NmfError, Result};
pub use factorize::{fit, FitConfig, Factorization, Factors};
pub use model::{
    format_model_spec, free_parameter_count, parse_model_spec, CostModel, DataMatrix, Family,
    ModelSpec, Storage, Variant,
};
