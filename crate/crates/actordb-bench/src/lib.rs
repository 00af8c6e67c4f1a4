//! Criterion microbenchmarks live in `benches/`; see `cargo bench -p
//! actordb-bench`. This crate intentionally exports nothing.
