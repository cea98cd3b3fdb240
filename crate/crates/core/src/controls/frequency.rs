// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::io::Read;

use serde::Deserialize;

use super::ControlsError;

pub const DEFAULT_FLOOR_PROB: f64 = 1e-8;

/// Unigram probabilities keyed by lower-cased word.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    probs: HashMap<String, f64>,
    floor_prob: f64,
}

#[derive(Deserialize)]
struct CountRow {
    word: String,
    count: f64,
}

impl FrequencyTable {
    /// Builds probabilities `count / Σ count`. Counts of words that differ
    /// only in case are merged.
    pub fn from_counts<I, S>(counts: I, floor_prob: f64) -> Result<Self, ControlsError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        if !(floor_prob > 0.0 && floor_prob <= 1.0) {
            return Err(ControlsError::Frequency(format!("floor probability {floor_prob} is not in (0, 1]")));
        }
        let mut merged: HashMap<String, f64> = HashMap::new();
        for (word, count) in counts {
            if !(count.is_finite() && count > 0.0) {
                return Err(ControlsError::Frequency(format!(
                    "count for {:?} must be positive, got {count}",
                    word.as_ref()
                )));
            }
            *merged.entry(word.as_ref().to_lowercase()).or_default() += count;
        }
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(ControlsError::Frequency("frequency table is empty".into()));
        }
        let probs = merged.into_iter().map(|(w, c)| (w, c / total)).collect();
        Ok(Self { probs, floor_prob })
    }

    /// Reads a `word,count` CSV.
    pub fn read_csv<R: Read>(reader: R, floor_prob: f64) -> Result<Self, ControlsError> {
        let rows: Vec<CountRow> = csv::Reader::from_reader(reader)
            .deserialize()
            .collect::<Result<_, _>>()?;
        Self::from_counts(rows.into_iter().map(|r| (r.word, r.count)), floor_prob)
    }

    pub fn floor_prob(&self) -> f64 {
        self.floor_prob
    }

    pub fn probability(&self, word: &str) -> f64 {
        self.probs.get(&word.to_lowercase()).copied().unwrap_or(self.floor_prob)
    }

    /// Natural log of the word's probability, `ln(floor_prob)` when unseen.
    pub fn log_frequency(&self, word: &str) -> f64 {
        self.probability(word).ln()
    }
}

/// Free-function form of [`FrequencyTable::log_frequency`].
pub fn log_frequency(table: &FrequencyTable, word: &str) -> f64 {
    table.log_frequency(word)
}
