//! Benchmarks for `ultra-core`; see `benches/unmixing.rs`.
//!
//! Run with `cargo bench -p ultra-bench`.
