//! Configuration, run manifests and the acceptance suite behind the
//! `levygreen` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod suite;

pub use config::{CliError, RunConfig};
