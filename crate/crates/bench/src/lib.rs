//! Benchmark-only crate: see the `benches/` directory for the criterion
//! targets. The library itself is empty.
