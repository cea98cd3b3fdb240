// SPDX-License-Identifier: MIT OR Apache-2.0

//! File-driven pipeline behind the `compscore` binary. Each command reads
//! its inputs from a [`RunConfig`] and writes its artifacts under `out_dir`.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::composition::CompositionError;
use crate::controls::ControlsError;
use crate::encoding::EncodingError;
use crate::model::ModelError;
use crate::stats::StatsError;

pub use commands::{
    cmd_calibrate, cmd_cluster, cmd_controls, cmd_encode, cmd_score, read_sentences, EncodeSummary, SetSummary,
};
pub use config::{sub_seed, ClusterValue, RunConfig};
pub use report::{cmd_report, Report};

/// Exit status for validation and input errors.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for internal and output errors.
pub const EXIT_INTERNAL: i32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or input data.
    #[error("{0}")]
    Validation(String),
    #[error("cannot read {}: {source}", .path.display())]
    Input { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", .path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Input { .. } => EXIT_VALIDATION,
            Self::Output { .. } | Self::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub(crate) fn input(path: &Path, source: std::io::Error) -> Self {
        Self::Input { path: path.to_path_buf(), source }
    }

    pub(crate) fn output(path: &Path, source: std::io::Error) -> Self {
        Self::Output { path: path.to_path_buf(), source }
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        Self::Validation(format!("model: {e}"))
    }
}

impl From<ControlsError> for PipelineError {
    fn from(e: ControlsError) -> Self {
        Self::Validation(format!("controls: {e}"))
    }
}

impl From<StatsError> for PipelineError {
    fn from(e: StatsError) -> Self {
        Self::Validation(format!("stats: {e}"))
    }
}

impl From<CompositionError> for PipelineError {
    fn from(e: CompositionError) -> Self {
        match e {
            CompositionError::DimensionMismatch { .. }
            | CompositionError::OutOfRange { .. }
            | CompositionError::InvalidDistribution(_) => Self::Internal(format!("composition: {e}")),
            _ => Self::Validation(format!("composition: {e}")),
        }
    }
}

impl From<EncodingError> for PipelineError {
    fn from(e: EncodingError) -> Self {
        match e {
            EncodingError::Io { path, source } => Self::Input { path, source },
            EncodingError::DegenerateDesign(_) => Self::Internal(format!("encoding: {e}")),
            _ => Self::Validation(format!("encoding: {e}")),
        }
    }
}
