//! Command-line front end for the `lagflow` particle solver.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{parse_config, parse_config_str, parse_rational, RunConfig};
pub use error::CliError;
