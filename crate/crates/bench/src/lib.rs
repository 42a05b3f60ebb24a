//! Criterion benchmarks for dse-core; the code lives under `benches/`.
