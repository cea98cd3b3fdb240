// SPDX-License-Identifier: MIT OR Apache-2.0

//! Majority-k calibration of the neuron budget `d_m'`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CompositionError;
use crate::model::ModelBundle;

/// Smallest `k` such that the `k` largest absolute values sum to strictly
/// more than `coverage` times the total. `None` for an all-zero vector.
pub fn majority_k(activations: &[f32], coverage: f64) -> Option<usize> {
    let mut mags: Vec<f64> = activations.iter().map(|v| (*v as f64).abs()).collect();
    let total: f64 = mags.iter().sum();
    if total == 0.0 {
        return None;
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    let target = coverage * total;
    let mut acc = 0.0;
    for (i, m) in mags.iter().enumerate() {
        acc += m;
        if acc > target {
            return Some(i + 1);
        }
    }
    // rounding can leave the full sum a hair below coverage·total when coverage → 1
    Some(mags.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityKReport {
    pub coverage: f64,
    /// Tokens run through the model.
    pub n_tokens: usize,
    /// (token, layer) pairs skipped because every activation was zero.
    pub n_skipped: usize,
    pub per_layer_mean_k: Vec<f64>,
    /// Mean over every counted (token, layer) pair.
    pub overall_mean_k: f64,
    /// Mean over tokens of each token's layer-averaged k.
    pub token_mean_k: f64,
}

/// Runs the model over `corpus_tokens`, cut into windows of `max_seq_len`.
pub fn calibrate_majority_k(
    bundle: &ModelBundle,
    corpus_tokens: &[u32],
    coverage: f64,
) -> Result<MajorityKReport, CompositionError> {
    let windows: Vec<Vec<u32>> = corpus_tokens
        .chunks(bundle.config.max_seq_len)
        .map(<[u32]>::to_vec)
        .collect();
    calibrate_majority_k_sequences(bundle, &windows, coverage)
}

/// Like [`calibrate_majority_k`], with each sequence run as its own context.
pub fn calibrate_majority_k_sequences(
    bundle: &ModelBundle,
    sequences: &[Vec<u32>],
    coverage: f64,
) -> Result<MajorityKReport, CompositionError> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(CompositionError::InvalidParameter(format!(
            "coverage must lie in (0, 1), got {coverage}"
        )));
    }
    if sequences.iter().all(Vec::is_empty) {
        return Err(CompositionError::EmptyCorpus);
    }
    let n_layers = bundle.config.n_layers;
    // per token: k for each layer (None when skipped)
    let per_seq: Vec<Vec<Vec<Option<usize>>>> = sequences
        .par_iter()
        .filter(|s| !s.is_empty())
        .map(|seq| {
            let trace = bundle.forward_with_trace(seq)?;
            Ok((0..seq.len())
                .map(|t| (0..n_layers).map(|l| majority_k(trace.activations(l, t), coverage)).collect())
                .collect())
        })
        .collect::<Result<_, CompositionError>>()?;

    let mut layer_sum = vec![0.0; n_layers];
    let mut layer_count = vec![0usize; n_layers];
    let mut token_means = Vec::new();
    let mut n_tokens = 0;
    let mut n_skipped = 0;
    for token in per_seq.iter().flatten() {
        n_tokens += 1;
        let mut sum = 0.0;
        let mut count = 0;
        for (l, k) in token.iter().enumerate() {
            match k {
                Some(k) => {
                    layer_sum[l] += *k as f64;
                    layer_count[l] += 1;
                    sum += *k as f64;
                    count += 1;
                }
                None => n_skipped += 1,
            }
        }
        if count > 0 {
            token_means.push(sum / count as f64);
        }
    }
    let total_count: usize = layer_count.iter().sum();
    if total_count == 0 {
        return Err(CompositionError::InvalidParameter(
            "every activation vector in the corpus was all-zero".into(),
        ));
    }
    let per_layer_mean_k = layer_sum
        .iter()
        .zip(&layer_count)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect();
    Ok(MajorityKReport {
        coverage,
        n_tokens,
        n_skipped,
        per_layer_mean_k,
        overall_mean_k: layer_sum.iter().sum::<f64>() / total_count as f64,
        token_mean_k: token_means.iter().sum::<f64>() / token_means.len() as f64,
    })
}
