//! Criterion benchmarks for the differentiation engine, metrics and flows live in `benches/`.
