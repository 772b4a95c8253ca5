//! Wall-clock timing of update sweeps, shared by the benchmark subcommand
//! and the scaling checks. Initialisation and parameter estimation are
//! excluded; only the multiplicative sweep is measured.

use std::time::Instant;

use crate::error::Result;
use crate::factorize::{init_factors, sweep_convex, sweep_traditional, Engine, Factors};
use crate::model::{DataMatrix, Variant};

/// Mean seconds for one full update sweep (both factors), averaged over
/// `reps` consecutive sweeps after a warm-up sweep.
pub fn time_update_sweep(
    v: &DataMatrix,
    k: usize,
    variant: Variant,
    engine: Engine,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    let data = v.values();
    let mut factors = init_factors(v, k, variant, seed, None);
    let sweep = |factors: &Factors| -> Result<Factors> {
        Ok(match factors {
            Factors::Traditional { w, h } => {
                let (w, h) = sweep_traditional(engine, w, h, data)?;
                Factors::Traditional { w, h }
            }
            Factors::Convex { e, d } => {
                let (e, d) = sweep_convex(engine, e, d, data)?;
                Factors::Convex { e, d }
            }
        })
    };

    factors = sweep(&factors)?;
    let start = Instant::now();
    for _ in 0..reps.max(1) {
        factors = sweep(&factors)?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(&factors);
    Ok(elapsed / reps.max(1) as f64)
}
