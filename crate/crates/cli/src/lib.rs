//! Scenario parsing, execution and output for the `sasdiag` binary.

pub mod emit;
pub mod run;
pub mod scenario;
