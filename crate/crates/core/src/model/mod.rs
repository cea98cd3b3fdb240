// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small decoder-only transformer runtime.
//!
//! A model directory holds `config.json`, `tensors.json`, `weights.bin` and
//! `vocab.txt`. Weights are little-endian f32, row-major; linear layers are
//! stored `[out_features, in_features]`.

mod config;
mod forward;
mod tokenizer;
mod weights;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use config::{Activation, ModelConfig, NormKind, Positional};
pub use forward::{Block, FeedForward, LayerTrace, ModelBundle};
pub(crate) use forward::normalize;
pub use tokenizer::{word_ranges, TokenSpan, TokenizerVocab, N_BYTE_TOKENS};
pub use weights::{TensorEntry, WeightStore};

/// Standard deviation of randomly initialized weights.
pub const INIT_STD: f32 = 0.02;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, actual: Vec<usize> },
    #[error("tensor {name} has a non-finite value at element {index}")]
    NonFinite { name: String, index: usize },
    #[error("tensor {name} ends at byte {end} but weights.bin has only {blob_len} bytes")]
    OutOfBounds { name: String, end: usize, blob_len: usize },
    #[error("malformed tensor manifest: {0}")]
    Manifest(String),
    #[error("tokenizer: {0}")]
    Tokenizer(String),
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} at position {position} is outside the vocabulary")]
    UnknownToken { id: u32, position: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Loads and validates a model directory.
pub fn load_model(model_dir: &Path) -> Result<ModelBundle, ModelError> {
    let cfg_path = model_dir.join("config.json");
    let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| ModelError::io(&cfg_path, e))?;
    let config: ModelConfig = serde_json::from_str(&cfg_text)
        .map_err(|e| ModelError::InvalidConfig(format!("{}: {e}", cfg_path.display())))?;
    config.validate()?;
    let weights = WeightStore::read_dir(model_dir)?;
    let tokenizer = TokenizerVocab::read_file(&model_dir.join("vocab.txt"))?;
    ModelBundle::from_weights(config, &weights, tokenizer)
}

/// Writes a model directory readable by [`load_model`].
pub fn save_model(bundle: &ModelBundle, model_dir: &Path) -> Result<(), ModelError> {
    fs::create_dir_all(model_dir).map_err(|e| ModelError::io(model_dir, e))?;
    let cfg_path = model_dir.join("config.json");
    let cfg = serde_json::to_string_pretty(&bundle.config).expect("config serializes");
    fs::write(&cfg_path, cfg).map_err(|e| ModelError::io(&cfg_path, e))?;

    let specs = bundle.config.tensor_specs();
    let (manifest, blob) = bundle.weight_store().to_manifest(specs.iter().map(|(n, _)| n.as_str()))?;
    let manifest_path = model_dir.join("tensors.json");
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, manifest_json).map_err(|e| ModelError::io(&manifest_path, e))?;
    let blob_path = model_dir.join("weights.bin");
    fs::write(&blob_path, blob).map_err(|e| ModelError::io(&blob_path, e))?;
    bundle.tokenizer.write_file(&model_dir.join("vocab.txt"))
}

/// Random model with N(0, 0.02²) weights and unit norm gains. The tokenizer
/// has the byte tokens followed by `<unused_i>` fillers up to `vocab_size`.
pub fn init_random_model(config: ModelConfig, seed: u64) -> Result<ModelBundle, ModelError> {
    let fillers = (N_BYTE_TOKENS..config.vocab_size).map(|i| format!("<unused_{i}>"));
    let tokenizer = TokenizerVocab::from_tokens(fillers)?;
    init_random_model_with_tokenizer(config, tokenizer, seed)
}

/// Like [`init_random_model`] with a caller-supplied tokenizer.
pub fn init_random_model_with_tokenizer(
    config: ModelConfig,
    tokenizer: TokenizerVocab,
    seed: u64,
) -> Result<ModelBundle, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
    let mut store = WeightStore::new();
    for (name, shape) in config.tensor_specs() {
        let n: usize = shape.iter().product();
        let data = if name.ends_with("norm1.weight")
            || name.ends_with("norm2.weight")
            || name == "final_norm.weight"
        {
            vec![1.0; n]
        } else if name == "lm_head.weight" && config.tie_embeddings {
            store.get("embed.weight").expect("embed is generated first").1.to_vec()
        } else {
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        };
        store.insert(name, shape, data);
    }
    ModelBundle::from_weights(config, &store, tokenizer)
}
