//! Criterion benchmarks for Hermite tensors and the U-statistic; see `benches/`.
