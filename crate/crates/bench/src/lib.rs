//! Benchmarks live in `benches/`; run them with `cargo bench -p bideconv-bench`.
