//! Benchmark-only crate; see `benches/update_sweeps.rs`.
