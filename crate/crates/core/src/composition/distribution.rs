// SPDX-License-Identifier: MIT OR Apache-2.0

use super::CompositionError;

/// Probability distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabDistribution {
    probs: Vec<f64>,
}

impl VocabDistribution {
    /// Validates that `probs` is a finite, nonnegative vector summing to 1 within 1e-5.
    pub fn new(probs: Vec<f64>) -> Result<Self, CompositionError> {
        if probs.is_empty() {
            return Err(CompositionError::InvalidDistribution("empty".into()));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(CompositionError::InvalidDistribution(format!(
                "entry {i} is {}",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(CompositionError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Softmax of `logits` with max subtraction.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Row-major `[vocab_size, d_model]` output embedding.
#[derive(Debug, Clone, Copy)]
pub struct Unembedding<'a> {
    weights: &'a [f32],
    vocab_size: usize,
    d_model: usize,
}

impl<'a> Unembedding<'a> {
    pub fn new(weights: &'a [f32], vocab_size: usize, d_model: usize) -> Result<Self, CompositionError> {
        if weights.len() != vocab_size * d_model {
            return Err(CompositionError::DimensionMismatch {
                expected: vocab_size * d_model,
                actual: weights.len(),
            });
        }
        Ok(Self { weights, vocab_size, d_model })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    /// Inner products of `vector` with every unembedding row, accumulated in f64.
    pub fn logits(&self, vector: &[f32]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.d_model)
            .map(|row| row.iter().zip(vector).map(|(&a, &b)| a as f64 * b as f64).sum())
            .collect()
    }
}

/// `softmax(E·v)`: the vocabulary distribution a memory value or block output promotes.
pub fn project_to_vocab(vector: &[f32], unembedding: &Unembedding<'_>) -> Result<VocabDistribution, CompositionError> {
    if vector.len() != unembedding.d_model {
        return Err(CompositionError::DimensionMismatch {
            expected: unembedding.d_model,
            actual: vector.len(),
        });
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(CompositionError::InvalidParameter("non-finite vector entry".into()));
    }
    Ok(VocabDistribution::softmax(&unembedding.logits(vector)))
}

/// Logarithm base used inside the Jensen-Shannon divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    /// Distances in `[0, 1]`.
    #[default]
    Two,
    Natural,
}

/// Jensen-Shannon distance (square root of the divergence), base 2.
pub fn js_distance(p: &VocabDistribution, q: &VocabDistribution) -> Result<f64, CompositionError> {
    js_distance_with_base(p, q, LogBase::Two)
}

pub fn js_distance_with_base(
    p: &VocabDistribution,
    q: &VocabDistribution,
    base: LogBase,
) -> Result<f64, CompositionError> {
    if p.len() != q.len() {
        return Err(CompositionError::DimensionMismatch { expected: p.len(), actual: q.len() });
    }
    Ok(js_distance_unchecked(&p.probs, &q.probs, base))
}

pub(crate) fn js_distance_unchecked(p: &[f64], q: &[f64], base: LogBase) -> f64 {
    let mut div = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            div += a * (a / m).ln();
        }
        if b > 0.0 {
            div += b * (b / m).ln();
        }
    }
    div *= 0.5;
    if base == LogBase::Two {
        div /= std::f64::consts::LN_2;
    }
    div.max(0.0).sqrt()
}
