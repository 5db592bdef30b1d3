//! The `nrv` command line: single-step commands over nrv volumes and
//! reproducible multi-step pipelines described by JSON manifests.

pub mod commands;
pub mod error;
pub mod pipeline;

pub use error::{CliError, CliResult};
pub use pipeline::{demo_manifest, run_pipeline, Manifest, RunRecord};
