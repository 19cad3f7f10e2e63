//! Benchmarks for the matching engine live under `benches/`.
