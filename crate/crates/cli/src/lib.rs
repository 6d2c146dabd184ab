//! Command-line pipeline: ingest → build-index → route → retrieve →
//! assemble, plus synthetic scenario generation and ablation runs.

pub mod commands;
pub mod config;
pub mod docs;
pub mod error;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, Stage};
