//! Benchmark harness: dataset ingestion, the repeated-split comparison
//! protocol, hyperparameter search, scenario sweeps and report emitters.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;
pub mod search;
pub mod standins;

pub use benchmark::{run_benchmark, BenchReport};
pub use config::{BenchConfig, SimulateConfig};
pub use error::BenchError;
pub use report::{emit_report, Format, Report};
