//! Command-line pipeline around `tidalflow-core`: configuration, command
//! dispatch and artifact persistence.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{run, Command};
pub use config::PipelineConfig;
