//! Criterion benchmarks for the metastab kernels; see `benches/`.
