//! Experiment orchestration for `sandpile-core`: flag parsing, seeded
//! replicate fan-out, statistics, CSV/JSON/PGM outputs and run manifests.

pub mod args;
pub mod commands;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod stats;

pub use args::{Cli, Command};
pub use commands::{run, RunReport};
pub use error::CliError;
