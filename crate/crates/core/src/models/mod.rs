//! Benchmark models.

pub mod car;
pub mod walker;
