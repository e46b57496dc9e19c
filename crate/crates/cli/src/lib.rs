//! Batch driver for the crackmetry pipeline: configuration, scene
//! directories, stage orchestration and reports.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod scene;
pub mod tools;

use std::fmt;

use serde::Serialize;

pub use config::PipelineConfig;
pub use pipeline::{run, Plan, RunSummary};
pub use report::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Load,
    Calibrate,
    RefineMasks,
    Denoise,
    Fuse,
    Measure,
    Eval,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Calibrate => "calibrate",
            Stage::RefineMasks => "refine-masks",
            Stage::Denoise => "denoise",
            Stage::Fuse => "fuse",
            Stage::Measure => "measure",
            Stage::Eval => "eval",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or incomplete configuration, detected before any compute.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 1 for stage
    /// failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }
}
