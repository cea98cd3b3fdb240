// SPDX-License-Identifier: MIT OR Apache-2.0

//! Composition Scores from transformer feed-forward memories, together with
//! the psycholinguistic control variables and the fMRI encoding and
//! cluster-permutation machinery used to relate them to brain data.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model;
pub mod composition;
pub mod controls;
pub mod encoding;
pub mod stats;
pub mod pipeline;
pub mod synth;
