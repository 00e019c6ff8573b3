//! Criterion benchmarks for `navobs`; see `benches/`.
//!
//! Run with `cargo bench -p navobs-bench`.
