// SPDX-License-Identifier: MIT OR Apache-2.0

//! Teacher-forced forward pass of a pre-norm decoder-only transformer,
//! recording the feed-forward memories' coefficients at every layer.

use rayon::prelude::*;

use super::{Activation, ModelConfig, ModelError, NormKind, Positional, TokenizerVocab, WeightStore};

const NORM_EPS: f32 = 1e-5;

/// `out[r] = Σ_c w[r, c]·x[c]` for a row-major `[rows, x.len()]` matrix.
pub(crate) fn matvec(w: &[f32], x: &[f32], out: &mut [f32]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

pub(crate) fn normalize(kind: NormKind, x: &[f32], weight: &[f32]) -> Vec<f32> {
    let n = x.len() as f32;
    match kind {
        NormKind::Rmsnorm => {
            let ms = x.iter().map(|v| v * v).sum::<f32>() / n;
            let scale = 1.0 / (ms + NORM_EPS).sqrt();
            x.iter().zip(weight).map(|(v, w)| v * scale * w).collect()
        }
        NormKind::Layernorm => {
            let mean = x.iter().sum::<f32>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let scale = 1.0 / (var + NORM_EPS).sqrt();
            x.iter().zip(weight).map(|(v, w)| (v - mean) * scale * w).collect()
        }
    }
}

fn gelu(x: f32) -> f32 {
    // tanh approximation
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Feed-forward block viewed as a key-value memory: `out = Σ_i m_i · v_i`,
/// where `v_i` is column `i` of the down projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub activation: Activation,
    pub d_model: usize,
    pub d_ff: usize,
    /// `[d_ff, d_model]`, present only for gated units.
    pub gate: Option<Vec<f32>>,
    /// `[d_ff, d_model]`
    pub up: Vec<f32>,
    /// `[d_model, d_ff]`
    pub down: Vec<f32>,
}

impl FeedForward {
    /// Neuron coefficients `m` (length `d_ff`) and block output (length `d_model`).
    pub fn forward(&self, x: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let mut m = vec![0.0; self.d_ff];
        matvec(&self.up, x, &mut m);
        match self.activation {
            Activation::Relu => m.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Gelu => m.iter_mut().for_each(|v| *v = gelu(*v)),
            Activation::SiluGlu => {
                let mut g = vec![0.0; self.d_ff];
                matvec(self.gate.as_deref().expect("gated block without gate weights"), x, &mut g);
                m.iter_mut().zip(&g).for_each(|(u, g)| *u *= silu(*g));
            }
        }
        let mut out = vec![0.0; self.d_model];
        matvec(&self.down, &m, &mut out);
        (m, out)
    }

    /// Value vector of neuron `i`.
    pub fn value_vector(&self, i: usize) -> Vec<f32> {
        (0..self.d_model).map(|r| self.down[r * self.d_ff + i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub norm1: Vec<f32>,
    pub norm2: Vec<f32>,
    pub ffn: FeedForward,
}

/// A loaded model: configuration, weights and tokenizer. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub tokenizer: TokenizerVocab,
    pub embed: Vec<f32>,
    pub pos_embed: Option<Vec<f32>>,
    pub blocks: Vec<Block>,
    pub final_norm: Vec<f32>,
    /// Unembedding `[vocab_size, d_model]`.
    pub lm_head: Vec<f32>,
}

impl ModelBundle {
    pub fn from_weights(
        config: ModelConfig,
        weights: &WeightStore,
        tokenizer: TokenizerVocab,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        weights.validate(&config)?;
        if tokenizer.len() > config.vocab_size {
            return Err(ModelError::Tokenizer(format!(
                "tokenizer has {} tokens but vocab_size is {}",
                tokenizer.len(),
                config.vocab_size
            )));
        }
        let d = config.d_model;
        let get = |name: &str, shape: &[usize]| weights.require(name, shape).map(<[f32]>::to_vec);
        let mut blocks = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let gate = if config.activation == Activation::SiluGlu {
                Some(get(&format!("layer.{i}.ffn.gate.weight"), &[config.d_ff, d])?)
            } else {
                None
            };
            blocks.push(Block {
                wq: get(&format!("layer.{i}.attn.q.weight"), &[d, d])?,
                wk: get(&format!("layer.{i}.attn.k.weight"), &[d, d])?,
                wv: get(&format!("layer.{i}.attn.v.weight"), &[d, d])?,
                wo: get(&format!("layer.{i}.attn.o.weight"), &[d, d])?,
                norm1: get(&format!("layer.{i}.norm1.weight"), &[d])?,
                norm2: get(&format!("layer.{i}.norm2.weight"), &[d])?,
                ffn: FeedForward {
                    activation: config.activation,
                    d_model: d,
                    d_ff: config.d_ff,
                    gate,
                    up: get(&format!("layer.{i}.ffn.up.weight"), &[config.d_ff, d])?,
                    down: get(&format!("layer.{i}.ffn.down.weight"), &[d, config.d_ff])?,
                },
            });
        }
        let pos_embed = match config.positional {
            Positional::LearnedAbsolute => Some(get("pos_embed.weight", &[config.max_seq_len, d])?),
            Positional::Rotary => None,
        };
        Ok(Self {
            embed: get("embed.weight", &[config.vocab_size, d])?,
            lm_head: get("lm_head.weight", &[config.vocab_size, d])?,
            final_norm: get("final_norm.weight", &[d])?,
            pos_embed,
            blocks,
            tokenizer,
            config,
        })
    }

    /// Rebuilds the named-tensor view used by the on-disk format.
    pub fn weight_store(&self) -> WeightStore {
        let c = &self.config;
        let d = c.d_model;
        let mut store = WeightStore::new();
        store.insert("embed.weight", vec![c.vocab_size, d], self.embed.clone());
        if let Some(p) = &self.pos_embed {
            store.insert("pos_embed.weight", vec![c.max_seq_len, d], p.clone());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            for (proj, w) in [("q", &b.wq), ("k", &b.wk), ("v", &b.wv), ("o", &b.wo)] {
                store.insert(format!("layer.{i}.attn.{proj}.weight"), vec![d, d], w.clone());
            }
            if let Some(g) = &b.ffn.gate {
                store.insert(format!("layer.{i}.ffn.gate.weight"), vec![c.d_ff, d], g.clone());
            }
            store.insert(format!("layer.{i}.ffn.up.weight"), vec![c.d_ff, d], b.ffn.up.clone());
            store.insert(format!("layer.{i}.ffn.down.weight"), vec![d, c.d_ff], b.ffn.down.clone());
            store.insert(format!("layer.{i}.norm1.weight"), vec![d], b.norm1.clone());
            store.insert(format!("layer.{i}.norm2.weight"), vec![d], b.norm2.clone());
        }
        store.insert("final_norm.weight", vec![d], self.final_norm.clone());
        store.insert("lm_head.weight", vec![c.vocab_size, d], self.lm_head.clone());
        store
    }

    /// Token ids of `text` under this model's tokenizer.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.tokenizer.tokenize(text).iter().map(|t| t.token_id).collect()
    }

    /// Runs the full sequence and records per-layer feed-forward internals.
    pub fn forward_with_trace(&self, token_ids: &[u32]) -> Result<LayerTrace, ModelError> {
        let c = &self.config;
        if token_ids.len() > c.max_seq_len {
            return Err(ModelError::SequenceTooLong { len: token_ids.len(), max: c.max_seq_len });
        }
        if let Some(pos) = token_ids.iter().position(|&t| t as usize >= c.vocab_size) {
            return Err(ModelError::UnknownToken { id: token_ids[pos], position: pos });
        }
        let d = c.d_model;
        let n = token_ids.len();
        let mut trace = LayerTrace::empty(c, n);

        let mut x: Vec<Vec<f32>> = token_ids
            .iter()
            .enumerate()
            .map(|(t, &id)| {
                let mut row = self.embed[id as usize * d..(id as usize + 1) * d].to_vec();
                if let Some(p) = &self.pos_embed {
                    row.iter_mut().zip(&p[t * d..(t + 1) * d]).for_each(|(a, b)| *a += b);
                }
                row
            })
            .collect();

        for (l, block) in self.blocks.iter().enumerate() {
            let qkv: Vec<(Vec<f32>, Vec<f32>, Vec<f32>)> = x
                .par_iter()
                .enumerate()
                .map(|(t, row)| {
                    let a = normalize(c.norm, row, &block.norm1);
                    let mut q = vec![0.0; d];
                    let mut k = vec![0.0; d];
                    let mut v = vec![0.0; d];
                    matvec(&block.wq, &a, &mut q);
                    matvec(&block.wk, &a, &mut k);
                    matvec(&block.wv, &a, &mut v);
                    if c.positional == Positional::Rotary {
                        apply_rope(&mut q, t, c);
                        apply_rope(&mut k, t, c);
                    }
                    (q, k, v)
                })
                .collect();

            #[allow(clippy::type_complexity)]
            let outputs: Vec<(Vec<f32>, Vec<f32>, Vec<f32>, Vec<f32>)> = (0..n)
                .into_par_iter()
                .map(|t| {
                    let attn = causal_attention(&qkv, t, c);
                    let mut proj = vec![0.0; d];
                    matvec(&block.wo, &attn, &mut proj);
                    let h: Vec<f32> = x[t].iter().zip(&proj).map(|(a, b)| a + b).collect();
                    let ffn_in = normalize(c.norm, &h, &block.norm2);
                    let (m, ffn_out) = block.ffn.forward(&ffn_in);
                    let out: Vec<f32> = h.iter().zip(&ffn_out).map(|(a, b)| a + b).collect();
                    (ffn_in, m, ffn_out, out)
                })
                .collect();

            for (t, (ffn_in, m, ffn_out, out)) in outputs.into_iter().enumerate() {
                trace.ffn_inputs[l][t * d..(t + 1) * d].copy_from_slice(&ffn_in);
                trace.activations[l][t * c.d_ff..(t + 1) * c.d_ff].copy_from_slice(&m);
                trace.ffn_outputs[l][t * d..(t + 1) * d].copy_from_slice(&ffn_out);
                trace.hidden[l][t * d..(t + 1) * d].copy_from_slice(&out);
                x[t] = out;
            }
        }

        let logits: Vec<Vec<f32>> = x
            .par_iter()
            .map(|row| {
                let normed = normalize(c.norm, row, &self.final_norm);
                let mut out = vec![0.0; c.vocab_size];
                matvec(&self.lm_head, &normed, &mut out);
                out
            })
            .collect();
        for (t, row) in logits.into_iter().enumerate() {
            trace.logits[t * c.vocab_size..(t + 1) * c.vocab_size].copy_from_slice(&row);
        }
        Ok(trace)
    }
}

fn apply_rope(v: &mut [f32], pos: usize, c: &ModelConfig) {
    let hd = c.head_dim();
    for head in v.chunks_exact_mut(hd) {
        for j in (0..hd).step_by(2) {
            let freq = 1.0 / c.rope_theta.powf(j as f32 / hd as f32);
            let (sin, cos) = (pos as f32 * freq).sin_cos();
            let (a, b) = (head[j], head[j + 1]);
            head[j] = a * cos - b * sin;
            head[j + 1] = a * sin + b * cos;
        }
    }
}

fn causal_attention(qkv: &[(Vec<f32>, Vec<f32>, Vec<f32>)], t: usize, c: &ModelConfig) -> Vec<f32> {
    let hd = c.head_dim();
    let scale = 1.0 / (hd as f32).sqrt();
    let mut out = vec![0.0; c.d_model];
    let mut scores = vec![0.0f32; t + 1];
    for h in 0..c.n_heads {
        let range = h * hd..(h + 1) * hd;
        let q = &qkv[t].0[range.clone()];
        for (s, score) in scores.iter_mut().enumerate() {
            let k = &qkv[s].1[range.clone()];
            *score = q.iter().zip(k).map(|(a, b)| a * b).sum::<f32>() * scale;
        }
        let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        let head_out = &mut out[range.clone()];
        for (s, w) in scores.iter().enumerate() {
            let v = &qkv[s].2[range.clone()];
            for (o, vv) in head_out.iter_mut().zip(v) {
                *o += w / sum * vv;
            }
        }
    }
    out
}

/// Per-position, per-layer record of a forward pass. All buffers are
/// row-major `[position, dim]` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub n_positions: usize,
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    ffn_inputs: Vec<Vec<f32>>,
    activations: Vec<Vec<f32>>,
    ffn_outputs: Vec<Vec<f32>>,
    hidden: Vec<Vec<f32>>,
    logits: Vec<f32>,
}

impl LayerTrace {
    fn empty(c: &ModelConfig, n: usize) -> Self {
        Self {
            n_positions: n,
            n_layers: c.n_layers,
            d_model: c.d_model,
            d_ff: c.d_ff,
            vocab_size: c.vocab_size,
            ffn_inputs: vec![vec![0.0; n * c.d_model]; c.n_layers],
            activations: vec![vec![0.0; n * c.d_ff]; c.n_layers],
            ffn_outputs: vec![vec![0.0; n * c.d_model]; c.n_layers],
            hidden: vec![vec![0.0; n * c.d_model]; c.n_layers],
            logits: vec![0.0; n * c.vocab_size],
        }
    }

    /// Normalized input `x` to the feed-forward block.
    pub fn ffn_input(&self, layer: usize, pos: usize) -> &[f32] {
        &self.ffn_inputs[layer][pos * self.d_model..(pos + 1) * self.d_model]
    }

    /// Neuron coefficients `m` at `(layer, pos)`.
    pub fn activations(&self, layer: usize, pos: usize) -> &[f32] {
        &self.activations[layer][pos * self.d_ff..(pos + 1) * self.d_ff]
    }

    pub fn ffn_output(&self, layer: usize, pos: usize) -> &[f32] {
        &self.ffn_outputs[layer][pos * self.d_model..(pos + 1) * self.d_model]
    }

    /// Residual stream after block `layer`.
    pub fn hidden_state(&self, layer: usize, pos: usize) -> &[f32] {
        &self.hidden[layer][pos * self.d_model..(pos + 1) * self.d_model]
    }

    pub fn logits(&self, pos: usize) -> &[f32] {
        &self.logits[pos * self.vocab_size..(pos + 1) * self.vocab_size]
    }

    pub fn all_finite(&self) -> bool {
        self.activations
            .iter()
            .chain(&self.ffn_outputs)
            .chain(&self.hidden)
            .chain(std::iter::once(&self.logits))
            .all(|buf| buf.iter().all(|v| v.is_finite()))
    }
}
