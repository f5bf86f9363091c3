//! Experiment drivers and command implementations behind the `rmcq` binary.

pub mod artifacts;
pub mod cli;
pub mod commands;
pub mod config;
pub mod drivers;
pub mod error;
pub mod pipeline;

pub use error::CliError;
