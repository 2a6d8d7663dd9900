//! Pipeline orchestration for the hierarchical graph-embedding toolkit: the
//! config schema, resumable stages with a hashed manifest, and projection
//! artifacts. The `hge` binary is a thin wrapper over this crate.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod project;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, run_stage, stage_artifacts, STAGES};
