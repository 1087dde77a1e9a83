//! Problem files and subcommands behind the `stochsym` binary.

pub mod commands;
pub mod problem;

pub use commands::{run, Cli, CliError, Outcome};
