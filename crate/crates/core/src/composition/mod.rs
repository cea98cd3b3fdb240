// SPDX-License-Identifier: MIT OR Apache-2.0

//! Composition Score: how evenly a feed-forward block's output draws on its
//! memories. Each neuron's value vector and the block output are projected to
//! vocabulary distributions; the score is the ratio of the smallest to the
//! largest Jensen-Shannon distance between the output and a neuron.

mod calibrate;
mod distribution;
mod score;
mod table;

use thiserror::Error;

pub use calibrate::{calibrate_majority_k, calibrate_majority_k_sequences, majority_k, MajorityKReport};
pub use distribution::{
    js_distance, js_distance_with_base, project_to_vocab, LogBase, Unembedding, VocabDistribution,
};
pub use score::{
    composition_score_approx, composition_score_exact, score_from_distances, top_neurons,
    CompositionScorer, ScoreMode, ScoringOptions,
};
pub(crate) use table::pearson;
pub use table::{
    extreme_prefixes, layer_series, layerwise_correlation, score_text, score_text_with_options, word_end_positions,
    CorrelationMatrix, ExtremePrefixes, ScoreRow, ScoreTable, SkippedSentence,
};

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum CompositionError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{what} {index} out of range (have {len})")]
    OutOfRange { what: &'static str, index: usize, len: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("calibration corpus is empty")]
    EmptyCorpus,
    #[error("need at least 2 words, got {0}")]
    TooFewWords(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("score table csv: {0}")]
    Csv(#[from] csv::Error),
}
