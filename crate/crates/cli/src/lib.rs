//! Library surface of the experiment runner: config parsing and matrix
//! execution, shared by the `mlsched` binary and the test suite.

pub mod config;
pub mod runner;
