//! Config-driven experiment runner over `piwa-core`.
//!
//! The `piwa` binary is a thin clap layer over [`commands`]; everything it
//! does is reachable from this library for tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod problem;
pub mod rate;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
