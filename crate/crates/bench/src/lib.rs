//! Criterion benchmarks for BACAP, Sphinx and the simulator; see `benches/`.
//! Run with `cargo bench -p echomix-bench`.
