//! Benchmarks for the perception and filtering pipeline; see `benches/`.
