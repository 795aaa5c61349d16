//! Criterion benchmarks for the adsat-core kernels live in `benches/`.
