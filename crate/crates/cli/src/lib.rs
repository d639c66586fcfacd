//! Orchestration behind the `fracrom` binary: run configuration, model
//! files and the individual commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod romfile;

pub use config::RunConfig;
pub use error::CliError;
