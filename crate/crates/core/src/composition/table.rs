// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::score::{CompositionScorer, ScoreMode, ScoringOptions};
use super::CompositionError;
use crate::model::{word_ranges, ModelBundle, TokenSpan};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sentence_id: usize,
    pub word_index: usize,
    pub word_text: String,
    /// Sentence text up to and including this word.
    pub prefix_text: String,
    pub layer: usize,
    pub score: f64,
    pub n_neurons_used: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedSentence {
    pub sentence_id: usize,
    pub reason: String,
}

/// One row per (sentence, word, layer), ordered by that key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub n_layers: usize,
    pub rows: Vec<ScoreRow>,
    pub skipped: Vec<SkippedSentence>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    sentence_id: usize,
    word_index: usize,
    word: String,
    layer: usize,
    score: f64,
    n_neurons: usize,
}

impl ScoreTable {
    pub fn layer_rows(&self, layer: usize) -> impl Iterator<Item = &ScoreRow> {
        self.rows.iter().filter(move |r| r.layer == layer)
    }

    /// Mean score of each layer.
    pub fn layer_means(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.n_layers];
        let mut count = vec![0usize; self.n_layers];
        for r in &self.rows {
            sum[r.layer] += r.score;
            count[r.layer] += 1;
        }
        sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
    }

    /// Writes `sentence_id,word_index,word,layer,score,n_neurons`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CompositionError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(CsvRow {
                sentence_id: r.sentence_id,
                word_index: r.word_index,
                word: r.word_text.clone(),
                layer: r.layer,
                score: r.score,
                n_neurons: r.n_neurons_used,
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the CSV form. Prefixes are rebuilt by joining each sentence's words with spaces.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CompositionError> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(reader).deserialize() {
            let r: CsvRow = rec?;
            rows.push(ScoreRow {
                sentence_id: r.sentence_id,
                word_index: r.word_index,
                word_text: r.word,
                prefix_text: String::new(),
                layer: r.layer,
                score: r.score,
                n_neurons_used: r.n_neurons,
            });
        }
        rows.sort_by_key(|r| (r.sentence_id, r.word_index, r.layer));
        let n_layers = rows.iter().map(|r| r.layer + 1).max().unwrap_or(0);
        let mut prefix = String::new();
        let mut current = None;
        for row in &mut rows {
            let key = (row.sentence_id, row.word_index);
            if current != Some(key) {
                if current.map(|c: (usize, usize)| c.0) != Some(key.0) {
                    prefix.clear();
                }
                if !prefix.is_empty() {
                    prefix.push(' ');
                }
                prefix.push_str(&row.word_text);
                current = Some(key);
            }
            row.prefix_text = prefix.clone();
        }
        Ok(Self { n_layers, rows, skipped: Vec::new() })
    }
}

/// Scores every word of every sentence at every layer, at the position of
/// the token holding the word's final byte.
pub fn score_text<S: AsRef<str> + Sync>(
    bundle: &ModelBundle,
    sentences: &[S],
    mode: ScoreMode,
) -> Result<ScoreTable, CompositionError> {
    score_text_with_options(bundle, sentences, mode, ScoringOptions::default())
}

pub fn score_text_with_options<S: AsRef<str> + Sync>(
    bundle: &ModelBundle,
    sentences: &[S],
    mode: ScoreMode,
    options: ScoringOptions,
) -> Result<ScoreTable, CompositionError> {
    if let ScoreMode::Approx(0) = mode {
        return Err(CompositionError::InvalidParameter("d_m' must be at least 1".into()));
    }
    let scorer = CompositionScorer::with_options(bundle, options);
    let n_layers = bundle.config.n_layers;
    let per_sentence: Vec<Result<Vec<ScoreRow>, SkippedSentence>> = sentences
        .par_iter()
        .enumerate()
        .map(|(sid, s)| score_sentence(&scorer, sid, s.as_ref(), mode))
        .collect::<Result<_, CompositionError>>()?;
    let mut table = ScoreTable { n_layers, ..Default::default() };
    for result in per_sentence {
        match result {
            Ok(rows) => table.rows.extend(rows),
            Err(skip) => {
                log::warn!("skipping sentence {}: {}", skip.sentence_id, skip.reason);
                table.skipped.push(skip);
            }
        }
    }
    Ok(table)
}

/// Index of the token holding each word's final byte.
pub fn word_end_positions(spans: &[TokenSpan], words: &[(usize, usize)]) -> Vec<usize> {
    words
        .iter()
        .map(|&(_, end)| {
            spans
                .iter()
                .position(|s| s.char_start < end && end <= s.char_end)
                .expect("spans cover the input")
        })
        .collect()
}

type SentenceResult = Result<Vec<ScoreRow>, SkippedSentence>;

fn score_sentence(
    scorer: &CompositionScorer<'_>,
    sentence_id: usize,
    text: &str,
    mode: ScoreMode,
) -> Result<SentenceResult, CompositionError> {
    let bundle = scorer.bundle();
    let spans = bundle.tokenizer.tokenize(text);
    if spans.len() > bundle.config.max_seq_len {
        return Ok(Err(SkippedSentence {
            sentence_id,
            reason: format!(
                "{} tokens exceeds max_seq_len {}",
                spans.len(),
                bundle.config.max_seq_len
            ),
        }));
    }
    let words = word_ranges(text);
    if words.is_empty() {
        return Ok(Ok(Vec::new()));
    }
    let ids: Vec<u32> = spans.iter().map(|s| s.token_id).collect();
    let trace = bundle.forward_with_trace(&ids)?;
    let positions = word_end_positions(&spans, &words);
    let n_layers = bundle.config.n_layers;
    let cells: Vec<(usize, usize)> = (0..words.len())
        .flat_map(|w| (0..n_layers).map(move |l| (w, l)))
        .collect();
    cells
        .par_iter()
        .map(|&(w, layer)| {
            let (start, end) = words[w];
            let (score, n_neurons_used) = scorer.score(&trace, layer, positions[w], mode)?;
            Ok(ScoreRow {
                sentence_id,
                word_index: w,
                word_text: text[start..end].to_string(),
                prefix_text: text[words[0].0..end].to_string(),
                layer,
                score,
                n_neurons_used,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Ok)
}

/// Symmetric matrix of Pearson correlations between layers. Undefined
/// entries (zero-variance layers) are NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.n + j];
        (!v.is_nan()).then_some(v)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Per-word score series of each layer, in (sentence, word) order.
pub fn layer_series(table: &ScoreTable) -> Vec<Vec<f64>> {
    let mut rows: Vec<&ScoreRow> = table.rows.iter().collect();
    rows.sort_by_key(|r| (r.sentence_id, r.word_index, r.layer));
    let mut series = vec![Vec::new(); table.n_layers];
    for r in rows {
        series[r.layer].push(r.score);
    }
    series
}

pub fn layerwise_correlation(table: &ScoreTable) -> Result<CorrelationMatrix, CompositionError> {
    let series = layer_series(table);
    let n = table.n_layers;
    let n_words = series.first().map_or(0, Vec::len);
    if n_words < 2 {
        return Err(CompositionError::TooFewWords(n_words));
    }
    if series.iter().any(|s| s.len() != n_words) {
        return Err(CompositionError::InvalidParameter(
            "score table does not have one row per (word, layer)".into(),
        ));
    }
    let mut values = vec![f64::NAN; n * n];
    for i in 0..n {
        for j in i..n {
            let r = if i == j {
                pearson(&series[i], &series[i]).map(|_| 1.0)
            } else {
                pearson(&series[i], &series[j])
            };
            let r = r.unwrap_or(f64::NAN);
            values[i * n + j] = r;
            values[j * n + i] = r;
        }
    }
    Ok(CorrelationMatrix { n, values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremePrefixes {
    /// Lowest scores first.
    pub low: Vec<(String, f64)>,
    /// Highest scores first.
    pub high: Vec<(String, f64)>,
}

/// The `n` lowest- and highest-scoring prefixes at `layer`; ties go to the earlier sentence.
pub fn extreme_prefixes(table: &ScoreTable, layer: usize, n: usize) -> Result<ExtremePrefixes, CompositionError> {
    if n < 1 {
        return Err(CompositionError::InvalidParameter("n must be at least 1".into()));
    }
    if layer >= table.n_layers {
        return Err(CompositionError::OutOfRange { what: "layer", index: layer, len: table.n_layers });
    }
    let mut rows: Vec<&ScoreRow> = table.layer_rows(layer).collect();
    rows.sort_by_key(|r| (r.sentence_id, r.word_index));
    let mut asc = rows.clone();
    asc.sort_by(|a, b| a.score.total_cmp(&b.score));
    let mut desc = rows;
    desc.sort_by(|a, b| b.score.total_cmp(&a.score));
    let pick = |v: Vec<&ScoreRow>| v.into_iter().take(n).map(|r| (r.prefix_text.clone(), r.score)).collect();
    Ok(ExtremePrefixes { low: pick(asc), high: pick(desc) })
}
