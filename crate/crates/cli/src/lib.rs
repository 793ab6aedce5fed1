//! Front end for the `coset` binary: configuration, commands, example
//! fixtures and deterministic JSON output.

pub mod commands;
pub mod fixtures;
pub mod json;

pub use commands::{execute, CliError, Command, RunConfig};
