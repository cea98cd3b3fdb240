// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Nonlinearity used inside the feed-forward block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
    /// LLaMA-style gated unit: `SiLU(gate·x) ⊙ (up·x)`.
    SiluGlu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Layernorm,
    Rmsnorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    Rotary,
    LearnedAbsolute,
}

/// Architecture of a decoder-only transformer, as stored in `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub activation: Activation,
    pub norm: NormKind,
    #[serde(default = "default_rope_theta")]
    pub rope_theta: f32,
    pub positional: Positional,
    pub max_seq_len: usize,
    #[serde(default)]
    pub tie_embeddings: bool,
}

fn default_rope_theta() -> f32 {
    10_000.0
}

impl ModelConfig {
    /// Small rotary/RMSNorm/ReLU configuration used throughout the tests and examples.
    pub fn toy(vocab_size: usize, d_model: usize, n_layers: usize, d_ff: usize) -> Self {
        Self {
            vocab_size,
            d_model,
            n_layers,
            n_heads: 4.min(d_model).max(1),
            d_ff,
            activation: Activation::Relu,
            norm: NormKind::Rmsnorm,
            rope_theta: default_rope_theta(),
            positional: Positional::Rotary,
            max_seq_len: 256,
            tie_embeddings: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "d_model ({}) is not divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.positional == Positional::Rotary {
            if !self.head_dim().is_multiple_of(2) {
                return Err(ModelError::InvalidConfig(format!(
                    "rotary embeddings need an even head dimension, got {}",
                    self.head_dim()
                )));
            }
            if !(self.rope_theta.is_finite() && self.rope_theta > 0.0) {
                return Err(ModelError::InvalidConfig("rope_theta must be positive".into()));
            }
        }
        Ok(())
    }

    /// Every tensor the model needs, with its shape, in canonical file order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut specs = vec![("embed.weight".to_string(), vec![self.vocab_size, d])];
        if self.positional == Positional::LearnedAbsolute {
            specs.push(("pos_embed.weight".to_string(), vec![self.max_seq_len, d]));
        }
        for i in 0..self.n_layers {
            for proj in ["q", "k", "v", "o"] {
                specs.push((format!("layer.{i}.attn.{proj}.weight"), vec![d, d]));
            }
            if self.activation == Activation::SiluGlu {
                specs.push((format!("layer.{i}.ffn.gate.weight"), vec![self.d_ff, d]));
            }
            specs.push((format!("layer.{i}.ffn.up.weight"), vec![self.d_ff, d]));
            specs.push((format!("layer.{i}.ffn.down.weight"), vec![d, self.d_ff]));
            specs.push((format!("layer.{i}.norm1.weight"), vec![d]));
            specs.push((format!("layer.{i}.norm2.weight"), vec![d]));
        }
        specs.push(("final_norm.weight".to_string(), vec![d]));
        specs.push(("lm_head.weight".to_string(), vec![self.vocab_size, d]));
        specs
    }
}
