// SPDX-License-Identifier: MIT OR Apache-2.0

//! Classical word-level control regressors: word rate, log unigram
//! frequency, and top-down / bottom-up / left-corner node counts.

mod counts;
mod frequency;
mod table;
mod tree;

use thiserror::Error;

pub use counts::{node_counts, Strategy};
pub use frequency::{log_frequency, FrequencyTable, DEFAULT_FLOOR_PROB};
pub use table::{
    build_control_table, read_timing_csv, timing_index, write_timing_csv, ControlRow, ControlTable, TimingRow,
};
pub use tree::{parse_bracketed, Node, ParseTree};

#[derive(Debug, Error)]
pub enum ControlsError {
    #[error("unbalanced parentheses at byte {offset}")]
    Unbalanced { offset: usize },
    #[error("empty nonterminal {label:?}{}", .offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    EmptyNonTerminal { label: String, offset: Option<usize> },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("frequency table: {0}")]
    Frequency(String),
    #[error("sentence {0} has a tree but no timing rows")]
    MissingSentence(usize),
    #[error("timing rows reference sentence {0}, which has no tree")]
    UnknownSentence(usize),
    #[error("timing is missing sentence {sentence_id} word {word_index}")]
    MissingWord { sentence_id: usize, word_index: usize },
    #[error("sentence {sentence_id}: tree has {tree_words} words but timing has {timing_words}")]
    WordCountMismatch { sentence_id: usize, tree_words: usize, timing_words: usize },
    #[error("sentence {sentence_id} word {word_index}: tree has {tree_word:?} but timing has {timing_word:?}")]
    WordMismatch { sentence_id: usize, word_index: usize, tree_word: String, timing_word: String },
    #[error("offset of sentence {sentence_id} word {word_index} does not increase")]
    NonIncreasingOffset { sentence_id: usize, word_index: usize },
    #[error("duplicate timing row for sentence {sentence_id} word {word_index}")]
    DuplicateTiming { sentence_id: usize, word_index: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
