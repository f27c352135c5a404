//! Configuration and subcommand pipelines behind the `xcf` binary.

pub mod commands;
pub mod config;
