// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::counts::{node_counts, Strategy};
use super::frequency::FrequencyTable;
use super::tree::ParseTree;
use super::ControlsError;

/// One row of the word timing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sentence_id: usize,
    pub word_index: usize,
    pub word: String,
    pub onset_s: f64,
    pub offset_s: f64,
}

/// Reads `sentence_id,word_index,word,onset_s,offset_s`.
pub fn read_timing_csv<R: Read>(reader: R) -> Result<Vec<TimingRow>, ControlsError> {
    Ok(csv::Reader::from_reader(reader).deserialize().collect::<Result<_, _>>()?)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], writer: W) -> Result<(), ControlsError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Word offsets keyed by `(sentence_id, word_index)`.
pub fn timing_index(rows: &[TimingRow]) -> Result<BTreeMap<(usize, usize), &TimingRow>, ControlsError> {
    let mut map = BTreeMap::new();
    for r in rows {
        if map.insert((r.sentence_id, r.word_index), r).is_some() {
            return Err(ControlsError::DuplicateTiming { sentence_id: r.sentence_id, word_index: r.word_index });
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub sentence_id: usize,
    pub word_index: usize,
    pub word: String,
    pub wordrate: f64,
    pub log_freq: f64,
    pub nc_topdown: u32,
    pub nc_bottomup: u32,
    pub nc_leftcorner: u32,
    pub offset_time: f64,
}

impl ControlRow {
    pub fn node_count(&self, strategy: Strategy) -> u32 {
        match strategy {
            Strategy::TopDown => self.nc_topdown,
            Strategy::BottomUp => self.nc_bottomup,
            Strategy::LeftCorner => self.nc_leftcorner,
        }
    }
}

/// Word-level control regressors ordered by `(sentence_id, word_index)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlTable {
    pub rows: Vec<ControlRow>,
}

impl ControlTable {
    pub const PREDICTORS: [&'static str; 5] = ["wordrate", "log_freq", "nc_topdown", "nc_bottomup", "nc_leftcorner"];

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ControlsError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ControlsError> {
        let rows = csv::Reader::from_reader(reader).deserialize().collect::<Result<_, _>>()?;
        Ok(Self { rows })
    }

    /// Predictor values in the order of [`Self::PREDICTORS`].
    pub fn predictor_values(row: &ControlRow) -> [f64; 5] {
        [
            row.wordrate,
            row.log_freq,
            row.nc_topdown as f64,
            row.nc_bottomup as f64,
            row.nc_leftcorner as f64,
        ]
    }
}

/// Joins trees, frequencies and word offsets. The join is keyed on
/// `(sentence_id, word_index)`, so timing row order does not matter.
pub fn build_control_table(
    trees: &[ParseTree],
    freq: &FrequencyTable,
    timing: &[TimingRow],
) -> Result<ControlTable, ControlsError> {
    let index = timing_index(timing)?;
    let tree_ids: BTreeSet<usize> = trees.iter().map(|t| t.sentence_id).collect();
    if let Some(&(sid, _)) = index.keys().find(|(sid, _)| !tree_ids.contains(sid)) {
        return Err(ControlsError::UnknownSentence(sid));
    }
    let mut sorted: Vec<&ParseTree> = trees.iter().collect();
    sorted.sort_by_key(|t| t.sentence_id);

    let mut rows = Vec::new();
    let mut last_offset = f64::NEG_INFINITY;
    for tree in sorted {
        let sid = tree.sentence_id;
        let words = tree.terminals();
        let timed = index.range((sid, 0)..=(sid, usize::MAX)).count();
        if timed == 0 {
            return Err(ControlsError::MissingSentence(sid));
        }
        if timed != words.len() {
            if let Some(w) = (0..words.len()).find(|w| !index.contains_key(&(sid, *w))) {
                return Err(ControlsError::MissingWord { sentence_id: sid, word_index: w });
            }
            return Err(ControlsError::WordCountMismatch { sentence_id: sid, tree_words: words.len(), timing_words: timed });
        }
        let counts: Vec<Vec<u32>> = Strategy::ALL.iter().map(|&s| node_counts(tree, s)).collect();
        for (w, word) in words.iter().enumerate() {
            let t = index
                .get(&(sid, w))
                .ok_or(ControlsError::MissingWord { sentence_id: sid, word_index: w })?;
            if t.word.to_lowercase() != word.to_lowercase() {
                return Err(ControlsError::WordMismatch {
                    sentence_id: sid,
                    word_index: w,
                    tree_word: word.to_string(),
                    timing_word: t.word.clone(),
                });
            }
            if !(t.offset_s > last_offset) || !t.offset_s.is_finite() {
                return Err(ControlsError::NonIncreasingOffset { sentence_id: sid, word_index: w });
            }
            last_offset = t.offset_s;
            rows.push(ControlRow {
                sentence_id: sid,
                word_index: w,
                word: word.to_string(),
                wordrate: 1.0,
                log_freq: freq.log_frequency(word),
                nc_topdown: counts[0][w],
                nc_bottomup: counts[1][w],
                nc_leftcorner: counts[2][w],
                offset_time: t.offset_s,
            });
        }
    }
    Ok(ControlTable { rows })
}
