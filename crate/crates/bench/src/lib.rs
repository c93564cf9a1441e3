//! Criterion benchmarks for the simulation kernels live in `benches/`.
//! Run with `cargo bench -p osnr-bench`.
