//! Criterion benchmarks for the routine-signature core; see `benches/`.
