//! Command-line front end for the Langevin moderate-deviation library.
//!
//! Subcommands load one TOML run configuration (`--config`, with dotted
//! `--set key=value` overrides), write CSV/JSON artifacts into an output
//! directory, and report failures through distinct exit codes: 1 for I/O,
//! 2 for configuration problems, 3 for numerical breakdowns.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;
pub use error::CliError;
