//! Criterion benchmarks for the retrieval hot paths live under `benches/`:
//! exact index search, subspace suppression and decomposition, and pool
//! construction.
