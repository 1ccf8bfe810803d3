//! Benchmarks live in `benches/`. Run with `cargo bench -p canopy-bench`.
