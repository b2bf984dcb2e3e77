//! Criterion benchmarks for `fcl-core`; see `benches/kernels.rs`.
