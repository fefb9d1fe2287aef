//! Library surface of the experiment runner; the `hmlab` binary is a thin
//! wrapper. Exposed so the integration and acceptance suites can drive
//! experiments in-process.

pub mod config;
pub mod experiments;
pub mod report;
