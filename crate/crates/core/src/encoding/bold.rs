// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::EncodingError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoldHeader {
    #[serde(rename = "n_TRs")]
    pub n_trs: usize,
    pub n_vertices: usize,
    #[serde(rename = "TR")]
    pub tr: f64,
}

/// One subject's time series, `[n_TRs × n_vertices]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldMatrix {
    pub subject: String,
    pub tr: f64,
    pub data: DMatrix<f64>,
}

impl BoldMatrix {
    /// Wraps data as given; call [`Self::zscore`] to standardise.
    pub fn new(subject: impl Into<String>, tr: f64, data: DMatrix<f64>) -> Result<Self, EncodingError> {
        let subject = subject.into();
        if !(tr > 0.0) {
            return Err(EncodingError::InvalidInput(format!("{subject}: TR must be positive")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EncodingError::InvalidInput(format!(
                "{subject}: non-finite value at TR {} vertex {}",
                i % data.nrows(),
                i / data.nrows()
            )));
        }
        Ok(Self { subject, tr, data })
    }

    pub fn n_trs(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_vertices(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_trs() as f64 * self.tr
    }

    /// Population z-score per vertex across time. Constant vertices become zero.
    pub fn zscore(mut self) -> Self {
        let n = self.data.nrows() as f64;
        for mut col in self.data.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
        self
    }

    fn paths(dir: &Path, subject: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{subject}.bold.bin")), dir.join(format!("{subject}.bold.json")))
    }

    /// Reads `<subject>.bold.bin` and `<subject>.bold.json`; the data are z-scored.
    pub fn read(dir: &Path, subject: &str) -> Result<Self, EncodingError> {
        let (bin, json) = Self::paths(dir, subject);
        let header: BoldHeader = serde_json::from_slice(&read_file(&json)?)
            .map_err(|e| EncodingError::InvalidInput(format!("{}: {e}", json.display())))?;
        let bytes = read_file(&bin)?;
        let expected = header.n_trs * header.n_vertices * 4;
        if bytes.len() != expected {
            return Err(EncodingError::InvalidInput(format!(
                "{}: {} bytes, header implies {expected}",
                bin.display(),
                bytes.len()
            )));
        }
        let values: Vec<f64> =
            bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let data = DMatrix::from_row_slice(header.n_trs, header.n_vertices, &values);
        Ok(Self::new(subject, header.tr, data)?.zscore())
    }

    pub fn write(&self, dir: &Path) -> Result<(), EncodingError> {
        let (bin, json) = Self::paths(dir, &self.subject);
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for r in 0..self.n_trs() {
            for v in self.data.row(r).iter() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let header = BoldHeader { n_trs: self.n_trs(), n_vertices: self.n_vertices(), tr: self.tr };
        write_file(&bin, &bytes)?;
        write_file(&json, serde_json::to_string_pretty(&header).expect("header serializes").as_bytes())
    }
}

/// Subject ids (`sub-XX`) with a `.bold.json` in `dir`, sorted.
pub fn list_subjects(dir: &Path) -> Result<Vec<String>, EncodingError> {
    let entries = fs::read_dir(dir).map_err(|source| EncodingError::Io { path: dir.to_path_buf(), source })?;
    let mut subjects: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".bold.json")).map(str::to_string))
        .collect();
    subjects.sort();
    Ok(subjects)
}

pub fn read_subjects(dir: &Path) -> Result<Vec<BoldMatrix>, EncodingError> {
    let subjects = list_subjects(dir)?;
    if subjects.is_empty() {
        return Err(EncodingError::InvalidInput(format!("no *.bold.json files in {}", dir.display())));
    }
    subjects.iter().map(|s| BoldMatrix::read(dir, s)).collect()
}

/// Vertex indices, one per line or whitespace separated.
pub fn read_mask(path: &Path) -> Result<Vec<usize>, EncodingError> {
    let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| EncodingError::InvalidInput(format!("{}: bad vertex index {tok:?}", path.display())))
        })
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>, EncodingError> {
    fs::read(path).map_err(|source| EncodingError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EncodingError> {
    fs::write(path, bytes).map_err(|source| EncodingError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_zscore() {
        let dir = tempfile::tempdir().unwrap();
        let data = DMatrix::from_fn(6, 3, |r, c| (r * 3 + c) as f64 + if c == 1 { (r * r) as f64 } else { 0.0 });
        BoldMatrix::new("sub-01", 2.0, data).unwrap().write(dir.path()).unwrap();
        let b = BoldMatrix::read(dir.path(), "sub-01").unwrap();
        assert_eq!((b.n_trs(), b.n_vertices(), b.tr), (6, 3, 2.0));
        for col in b.data.column_iter() {
            assert!(col.mean().abs() < 1e-6);
            assert!(((col.norm_squared() / 6.0).sqrt() - 1.0).abs() < 1e-6);
        }
        assert_eq!(list_subjects(dir.path()).unwrap(), ["sub-01"]);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        BoldMatrix::new("sub-01", 2.0, DMatrix::from_element(4, 2, 1.0)).unwrap().write(dir.path()).unwrap();
        fs::write(dir.path().join("sub-01.bold.bin"), [0u8; 12]).unwrap();
        assert!(BoldMatrix::read(dir.path(), "sub-01").is_err());
    }

    #[test]
    fn header_uses_documented_keys() {
        let h: BoldHeader = serde_json::from_str(r#"{"n_TRs": 3, "n_vertices": 2, "TR": 1.5}"#).unwrap();
        assert_eq!(h, BoldHeader { n_trs: 3, n_vertices: 2, tr: 1.5 });
    }
}
