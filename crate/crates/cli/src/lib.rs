//! Command-line front end: JSON configs in, JSON reports, CSV traces and SVG
//! charts out.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run_command, CliError, Command, Options, Outcome};
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
