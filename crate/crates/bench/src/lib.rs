//! Benchmarks for the quadlag solvers live in `benches/`.
