//! Criterion benchmarks for the pricing engine live in `benches/`.
