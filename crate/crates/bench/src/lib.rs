//! Benchmarks for segeval-core live under `benches/`.
