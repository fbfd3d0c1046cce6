//! Command-line front end for the aerial traffic detector: synthetic scenes,
//! frame I/O, detection logs, metrics tables and charts.

pub mod annotate;
pub mod annotations;
pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod frames;
pub mod metrics_csv;
pub mod svg;

pub use app::Cli;
pub use commands::execute;
pub use error::{CliError, CliResult};
