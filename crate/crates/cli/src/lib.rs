//! Command-line front-end: subgraph counting, relational-algebra queries over
//! annotated tables, and the experiment harness.

pub mod commands;
pub mod experiment;
pub mod relalg;

pub use commands::{run, Cli, CliError};
