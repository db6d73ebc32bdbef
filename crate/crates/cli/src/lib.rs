//! Command line pipeline around `tkge-core`: config files, stage runners
//! and artifact manifests.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::{execute, Cli};
pub use config::PipelineConfig;
pub use error::Failure;
