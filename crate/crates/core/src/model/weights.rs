// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat tensor storage backed by `tensors.json` + `weights.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};

/// One entry of `tensors.json`. `offset` is in bytes from the start of `weights.bin`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    pub dtype: String,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn byte_len(&self) -> usize {
        self.numel() * 4
    }
}

/// Named f32 tensors. Each tensor owns its row-major data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.insert(name.into(), (shape, data));
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.tensors.get(name).map(|(s, d)| (s.as_slice(), d.as_slice()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f32>> {
        self.tensors.get_mut(name).map(|(_, d)| d)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Fetches a tensor and checks its shape.
    pub fn require(&self, name: &str, shape: &[usize]) -> Result<&[f32], ModelError> {
        let (actual, data) = self
            .get(name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
        if actual != shape {
            return Err(ModelError::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                actual: actual.to_vec(),
            });
        }
        Ok(data)
    }

    /// Checks every tensor required by `config` for presence, shape and finiteness.
    pub fn validate(&self, config: &ModelConfig) -> Result<(), ModelError> {
        for (name, shape) in config.tensor_specs() {
            let data = self.require(&name, &shape)?;
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { name, index: pos });
            }
        }
        Ok(())
    }

    /// Reads `tensors.json` and `weights.bin` from `dir`.
    pub fn read_dir(dir: &Path) -> Result<Self, ModelError> {
        let manifest_path = dir.join("tensors.json");
        let manifest_text = fs::read_to_string(&manifest_path)
            .map_err(|e| ModelError::io(&manifest_path, e))?;
        let manifest: Vec<TensorEntry> = serde_json::from_str(&manifest_text)
            .map_err(|e| ModelError::Manifest(format!("{}: {e}", manifest_path.display())))?;
        let blob_path = dir.join("weights.bin");
        let blob = fs::read(&blob_path).map_err(|e| ModelError::io(&blob_path, e))?;
        Self::from_manifest(&manifest, &blob)
    }

    pub fn from_manifest(manifest: &[TensorEntry], blob: &[u8]) -> Result<Self, ModelError> {
        let mut spans: Vec<(usize, usize, &str)> = Vec::with_capacity(manifest.len());
        let mut store = Self::new();
        for entry in manifest {
            if entry.dtype != "f32" {
                return Err(ModelError::Manifest(format!(
                    "tensor {} has unsupported dtype {:?}",
                    entry.name, entry.dtype
                )));
            }
            if entry.offset % 4 != 0 {
                return Err(ModelError::Manifest(format!(
                    "tensor {} offset {} is not 4-byte aligned",
                    entry.name, entry.offset
                )));
            }
            let end = entry.offset + entry.byte_len();
            if end > blob.len() {
                return Err(ModelError::OutOfBounds {
                    name: entry.name.clone(),
                    end,
                    blob_len: blob.len(),
                });
            }
            if store.tensors.contains_key(&entry.name) {
                return Err(ModelError::Manifest(format!("duplicate tensor {}", entry.name)));
            }
            let data = blob[entry.offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            spans.push((entry.offset, end, &entry.name));
            store.insert(entry.name.clone(), entry.shape.clone(), data);
        }
        spans.sort_unstable();
        for pair in spans.windows(2) {
            let (_, end_a, name_a) = pair[0];
            let (start_b, end_b, name_b) = pair[1];
            // zero-sized tensors never overlap anything
            if start_b < end_a && end_b > start_b {
                return Err(ModelError::Manifest(format!(
                    "tensors {name_a} and {name_b} overlap in weights.bin"
                )));
            }
        }
        Ok(store)
    }

    /// Serializes into a manifest and a contiguous blob, tensors laid out in `order`.
    pub fn to_manifest<'a>(
        &self,
        order: impl IntoIterator<Item = &'a str>,
    ) -> Result<(Vec<TensorEntry>, Vec<u8>), ModelError> {
        let mut manifest = Vec::new();
        let mut blob = Vec::new();
        for name in order {
            let (shape, data) = self
                .tensors
                .get(name)
                .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
            manifest.push(TensorEntry {
                name: name.to_string(),
                offset: blob.len(),
                shape: shape.clone(),
                dtype: "f32".into(),
            });
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok((manifest, blob))
    }
}
