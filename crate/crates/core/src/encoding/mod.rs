// SPDX-License-Identifier: MIT OR Apache-2.0

//! Encoding models: HRF-convolved design matrices, OLS and ridge fits per
//! vertex, noise-ceiling normalization and PCA feature reduction.

mod bold;
mod design;
mod hrf;
mod isc;
mod pca;
mod regress;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use bold::{list_subjects, read_mask, read_subjects, BoldHeader, BoldMatrix};
pub use design::{
    convolve_events, convolve_fine, convolve_to_design, n_scans, with_intercept, zscore_columns, ConvolutionOptions,
    DesignMatrix, EventSeries, INTERCEPT,
};
pub use hrf::{hrf, HrfParams};
pub use isc::{isc_ceiling, normalize_r2, DEFAULT_EPSILON};
pub use pca::{pca_reduce, Pca};
pub use regress::{
    default_alphas, fit_ols, fit_ridge, log_grid, r_squared, AlphaSelection, OlsFit, OlsSolver, RidgeFit, RidgeSolver,
};
pub use run::{
    check_subjects, design_for_scans, events_from_controls, events_from_keyed, events_from_scores, run_encoding,
    EncodingOptions, EncodingResult, Method, R2Mode, VertexResult,
};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("{0}")]
    InvalidInput(String),
    #[error("event {index} at {time} s lies outside the {duration} s scan window")]
    EventOutOfRange { index: usize, time: f64, duration: f64 },
    #[error("predictor {0:?} has zero variance after convolution")]
    DegenerateColumn(String),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("design is rank deficient (rank {rank}); collinear columns: {}", .columns.join(", "))]
    RankDeficient { rank: usize, columns: Vec<String> },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("events end at {events_end} s but the recording lasts {bold_duration} s (TR {tr} s)")]
    DurationMismatch { events_end: f64, bold_duration: f64, tr: f64 },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
