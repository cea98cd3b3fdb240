// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::OnceLock;

use rayon::prelude::*;

use super::distribution::{js_distance_unchecked, LogBase, Unembedding, VocabDistribution};
use super::CompositionError;
use crate::model::{normalize, LayerTrace, ModelBundle};

/// Exact scores use every neuron; approximate scores keep the `d_m'` neurons
/// with the largest absolute activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    Exact,
    Approx(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoringOptions {
    pub log_base: LogBase,
    /// Apply the final norm to vectors before unembedding. Off by default.
    pub final_norm: bool,
}

/// `min / max` of the distances; 1 when every distance is zero.
pub fn score_from_distances(distances: &[f64]) -> f64 {
    let (min, max) = distances
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if max == 0.0 {
        1.0
    } else {
        min / max
    }
}

/// Indices of the `k` largest `|activations|`, ties going to the lower index.
pub fn top_neurons(activations: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..activations.len()).collect();
    idx.sort_by(|&a, &b| {
        activations[b]
            .abs()
            .total_cmp(&activations[a].abs())
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(activations.len()));
    idx
}

/// Computes Composition Scores for one model. Neuron value distributions are
/// position-independent and cached per layer on first use.
pub struct CompositionScorer<'a> {
    bundle: &'a ModelBundle,
    options: ScoringOptions,
    memories: Vec<OnceLock<Vec<VocabDistribution>>>,
}

impl<'a> CompositionScorer<'a> {
    pub fn new(bundle: &'a ModelBundle) -> Self {
        Self::with_options(bundle, ScoringOptions::default())
    }

    pub fn with_options(bundle: &'a ModelBundle, options: ScoringOptions) -> Self {
        let memories = (0..bundle.config.n_layers).map(|_| OnceLock::new()).collect();
        Self { bundle, options, memories }
    }

    pub fn bundle(&self) -> &ModelBundle {
        self.bundle
    }

    fn unembedding(&self) -> Unembedding<'_> {
        let c = &self.bundle.config;
        Unembedding::new(&self.bundle.lm_head, c.vocab_size, c.d_model).expect("validated at load")
    }

    fn project(&self, vector: &[f32]) -> VocabDistribution {
        let e = self.unembedding();
        if self.options.final_norm {
            let normed = normalize(self.bundle.config.norm, vector, &self.bundle.final_norm);
            VocabDistribution::softmax(&e.logits(&normed))
        } else {
            VocabDistribution::softmax(&e.logits(vector))
        }
    }

    /// Vocabulary distributions of every value vector in `layer`.
    pub fn memory_distributions(&self, layer: usize) -> Result<&[VocabDistribution], CompositionError> {
        let cell = self.memories.get(layer).ok_or(CompositionError::OutOfRange {
            what: "layer",
            index: layer,
            len: self.memories.len(),
        })?;
        Ok(cell.get_or_init(|| {
            let ffn = &self.bundle.blocks[layer].ffn;
            (0..ffn.d_ff)
                .into_par_iter()
                .map(|i| self.project(&ffn.value_vector(i)))
                .collect()
        }))
    }

    fn check(&self, trace: &LayerTrace, layer: usize, position: usize) -> Result<(), CompositionError> {
        if layer >= trace.n_layers || layer >= self.memories.len() {
            return Err(CompositionError::OutOfRange { what: "layer", index: layer, len: trace.n_layers });
        }
        if position >= trace.n_positions {
            return Err(CompositionError::OutOfRange {
                what: "position",
                index: position,
                len: trace.n_positions,
            });
        }
        if trace.d_ff != self.bundle.config.d_ff || trace.d_model != self.bundle.config.d_model {
            return Err(CompositionError::DimensionMismatch {
                expected: self.bundle.config.d_ff,
                actual: trace.d_ff,
            });
        }
        Ok(())
    }

    /// Distances between the block output's distribution and each listed neuron's.
    pub fn distances(
        &self,
        trace: &LayerTrace,
        layer: usize,
        position: usize,
        neurons: &[usize],
    ) -> Result<Vec<f64>, CompositionError> {
        self.check(trace, layer, position)?;
        let memories = self.memory_distributions(layer)?;
        let output = self.project(trace.ffn_output(layer, position));
        Ok(neurons
            .iter()
            .map(|&i| js_distance_unchecked(memories[i].probs(), output.probs(), self.options.log_base))
            .collect())
    }

    pub fn exact(&self, trace: &LayerTrace, layer: usize, position: usize) -> Result<f64, CompositionError> {
        let all: Vec<usize> = (0..self.bundle.config.d_ff).collect();
        Ok(score_from_distances(&self.distances(trace, layer, position, &all)?))
    }

    /// Score over the `d_m_prime` most active neurons; returns the score and the number of neurons used.
    pub fn approx(
        &self,
        trace: &LayerTrace,
        layer: usize,
        position: usize,
        d_m_prime: usize,
    ) -> Result<(f64, usize), CompositionError> {
        if d_m_prime < 1 {
            return Err(CompositionError::InvalidParameter("d_m' must be at least 1".into()));
        }
        self.check(trace, layer, position)?;
        let chosen = top_neurons(trace.activations(layer, position), d_m_prime);
        let d = self.distances(trace, layer, position, &chosen)?;
        Ok((score_from_distances(&d), chosen.len()))
    }

    pub fn score(
        &self,
        trace: &LayerTrace,
        layer: usize,
        position: usize,
        mode: ScoreMode,
    ) -> Result<(f64, usize), CompositionError> {
        match mode {
            ScoreMode::Exact => Ok((self.exact(trace, layer, position)?, self.bundle.config.d_ff)),
            ScoreMode::Approx(k) => self.approx(trace, layer, position, k),
        }
    }
}

/// Exact Composition Score at one `(layer, position)`.
pub fn composition_score_exact(
    trace: &LayerTrace,
    layer: usize,
    position: usize,
    bundle: &ModelBundle,
) -> Result<f64, CompositionError> {
    CompositionScorer::new(bundle).exact(trace, layer, position)
}

/// Activation-restricted Composition Score; returns `(score, n_neurons_used)`.
pub fn composition_score_approx(
    trace: &LayerTrace,
    layer: usize,
    position: usize,
    bundle: &ModelBundle,
    d_m_prime: usize,
) -> Result<(f64, usize), CompositionError> {
    CompositionScorer::new(bundle).approx(trace, layer, position, d_m_prime)
}
