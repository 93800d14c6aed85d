//! Command implementations behind the `dynlab` binary; exposed as a library
//! so the test suites drive the same code paths as the CLI.

pub mod commands;
pub mod report;

pub use commands::*;
