// SPDX-License-Identifier: MIT OR Apache-2.0

//! Greedy longest-match tokenizer over a flat vocabulary with byte fallback.
//!
//! Ids `0..256` are the reserved byte tokens `<0x00>`..`<0xFF>`; every other
//! token is a literal UTF-8 string. At each input position the longest
//! vocabulary string that matches is emitted, falling back to the byte token
//! when nothing matches, so every input is tokenizable.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::ModelError;

pub const N_BYTE_TOKENS: usize = 256;

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

/// A token produced by [`TokenizerVocab::tokenize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub token_id: u32,
    /// Byte offsets into the input, `char_start..char_end`.
    pub char_start: usize,
    pub char_end: usize,
    /// Whitespace-delimited word containing byte `char_end - 1`.
    pub word_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerVocab {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
    max_token_bytes: usize,
}

impl TokenizerVocab {
    /// Builds a vocabulary from the byte tokens followed by `extra` tokens.
    pub fn from_tokens<I, S>(extra: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = (0..=255u8).map(byte_token).collect();
        tokens.extend(extra.into_iter().map(Into::into));
        Self::from_list(tokens)
    }

    /// Builds a vocabulary from a complete token list whose first 256 entries are the byte tokens.
    pub fn from_list(tokens: Vec<String>) -> Result<Self, ModelError> {
        if tokens.len() < N_BYTE_TOKENS {
            return Err(ModelError::Tokenizer(format!(
                "vocabulary has {} tokens, fewer than the {N_BYTE_TOKENS} reserved byte tokens",
                tokens.len()
            )));
        }
        for (b, tok) in tokens.iter().take(N_BYTE_TOKENS).enumerate() {
            if *tok != byte_token(b as u8) {
                return Err(ModelError::Tokenizer(format!(
                    "line {} must be {} but is {tok:?}",
                    b + 1,
                    byte_token(b as u8)
                )));
            }
        }
        let mut lookup = HashMap::with_capacity(tokens.len());
        let mut max_token_bytes = 1;
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(ModelError::Tokenizer(format!("token {id} is empty")));
            }
            if lookup.insert(tok.clone(), id as u32).is_some() {
                return Err(ModelError::Tokenizer(format!("duplicate token {tok:?}")));
            }
            if id >= N_BYTE_TOKENS {
                max_token_bytes = max_token_bytes.max(tok.len());
            }
        }
        Ok(Self { tokens, lookup, max_token_bytes })
    }

    /// Vocabulary of the byte tokens plus the `n_words` most frequent words of
    /// `corpus`, each both bare and with a leading space. Ties are broken
    /// alphabetically so the result is deterministic.
    pub fn from_corpus(corpus: &str, n_words: usize) -> Result<Self, ModelError> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in corpus.split_whitespace() {
            *counts.entry(w).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut extra = Vec::new();
        for (w, _) in ranked.into_iter().take(n_words) {
            extra.push(w.to_string());
            extra.push(format!(" {w}"));
        }
        extra.push(" ".to_string());
        let mut seen: std::collections::HashSet<String> = (0..=255u8).map(byte_token).collect();
        extra.retain(|t| seen.insert(t.clone()));
        Self::from_tokens(extra)
    }

    /// Reads `vocab.txt`: one token per line, the first 256 lines reserved for byte tokens.
    pub fn read_file(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        let mut lines: Vec<String> = text.split('\n').map(str::to_string).collect();
        if lines.last().is_some_and(String::is_empty) {
            lines.pop();
        }
        Self::from_list(lines)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(tok) = self.tokens.iter().find(|t| t.contains('\n')) {
            return Err(ModelError::Tokenizer(format!(
                "token {tok:?} contains a newline and cannot be written to vocab.txt"
            )));
        }
        let mut out = self.tokens.join("\n");
        out.push('\n');
        fs::write(path, out).map_err(|e| ModelError::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenSpan> {
        let bytes = text.as_bytes();
        let words = word_starts(text);
        let mut spans = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            let (id, len) = self.longest_match(text, pos);
            let end = pos + len;
            spans.push(TokenSpan {
                token_id: id,
                char_start: pos,
                char_end: end,
                word_index: word_of_byte(&words, end - 1),
            });
            pos = end;
        }
        spans
    }

    fn longest_match(&self, text: &str, pos: usize) -> (u32, usize) {
        let rest = &text.as_bytes()[pos..];
        let max = self.max_token_bytes.min(rest.len());
        for len in (1..=max).rev() {
            if let Ok(candidate) = std::str::from_utf8(&rest[..len]) {
                if let Some(&id) = self.lookup.get(candidate) {
                    if id as usize >= N_BYTE_TOKENS {
                        return (id, len);
                    }
                }
            }
        }
        (u32::from(rest[0]), 1)
    }

    /// Raw bytes of a token; byte tokens map to their single byte.
    pub fn token_bytes(&self, id: u32) -> Option<Vec<u8>> {
        if (id as usize) < N_BYTE_TOKENS {
            return Some(vec![id as u8]);
        }
        self.token(id).map(|t| t.as_bytes().to_vec())
    }

    /// Concatenates token bytes. Invalid UTF-8 sequences are replaced with U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids.iter().filter_map(|&id| self.token_bytes(id)).flatten().collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

/// Byte offsets at which whitespace-delimited words start.
fn word_starts(text: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            starts.push(i);
            in_word = true;
        }
    }
    starts
}

/// Index of the last word starting at or before `byte`. Whitespace bytes
/// belong to the preceding word; leading whitespace to word 0.
fn word_of_byte(starts: &[usize], byte: usize) -> usize {
    starts.partition_point(|&s| s <= byte).saturating_sub(1)
}

/// Byte ranges of the whitespace-delimited words of `text`.
pub fn word_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                ranges.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        ranges.push((s, text.len()));
    }
    ranges
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(spans: &[TokenSpan], text: &str) -> Vec<String> {
        spans.iter().map(|s| text[s.char_start..s.char_end].to_string()).collect()
    }

    #[test]
    fn longest_match_wins() {
        let vocab = TokenizerVocab::from_tokens(["ab", "a", "b"]).unwrap();
        let spans = vocab.tokenize("ab");
        assert_eq!(spans.len(), 1);
        assert_eq!(vocab.token(spans[0].token_id), Some("ab"));
    }

    #[test]
    fn single_letters() {
        let vocab = TokenizerVocab::from_tokens(["a", "b"]).unwrap();
        let spans = vocab.tokenize("ab");
        assert_eq!(texts(&spans, "ab"), ["a", "b"]);
        assert_eq!(spans.iter().map(|s| s.word_index).collect::<Vec<_>>(), [0, 0]);
    }

    #[test]
    fn subword_alignment() {
        let vocab = TokenizerVocab::from_tokens(["milk", "pud", "ding"]).unwrap();
        let text = "milk pudding";
        let spans = vocab.tokenize(text);
        // "milk", byte ' ', "pud", "ding"; the space belongs to word 0
        assert_eq!(texts(&spans, text), ["milk", " ", "pud", "ding"]);
        let words: Vec<usize> = spans
            .iter()
            .filter(|s| &text[s.char_start..s.char_end] != " ")
            .map(|s| s.word_index)
            .collect();
        assert_eq!(words, [0, 1, 1]);
        assert_eq!(spans[1].word_index, 0);
    }

    #[test]
    fn byte_fallback_for_unknown_characters() {
        let vocab = TokenizerVocab::from_tokens(["x"]).unwrap();
        let spans = vocab.tokenize("é");
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].token_id, 0xC3);
        assert_eq!(spans[1].token_id, 0xA9);
        assert_eq!(vocab.decode(&[0xC3, 0xA9]), "é");
    }

    #[test]
    fn rejects_bad_reserved_prefix() {
        let mut list: Vec<String> = (0..=255u8).map(byte_token).collect();
        list[3] = "oops".into();
        assert!(TokenizerVocab::from_list(list).is_err());
        let list: Vec<String> = (0..=255u8).map(byte_token).chain(["a".into(), "a".into()]).collect();
        assert!(TokenizerVocab::from_list(list).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = TokenizerVocab::from_tokens([" the", "dog", "\u{00e9}t\u{00e9}"]).unwrap();
        vocab.write_file(&path).unwrap();
        assert_eq!(TokenizerVocab::read_file(&path).unwrap(), vocab);
    }

    #[test]
    fn word_ranges_skip_whitespace() {
        assert_eq!(word_ranges("  a bc\td "), vec![(2, 3), (4, 6), (7, 8)]);
    }

    proptest! {
        #[test]
        fn decode_inverts_tokenize(s in any::<String>(), extra in proptest::collection::vec("[a-z ]{1,4}", 0..12)) {
            let mut extra = extra;
            extra.sort();
            extra.dedup();
            let vocab = TokenizerVocab::from_tokens(extra).unwrap();
            let spans = vocab.tokenize(&s);
            let ids: Vec<u32> = spans.iter().map(|t| t.token_id).collect();
            prop_assert_eq!(vocab.decode(&ids), s.clone());
            let mut pos = 0;
            for t in &spans {
                prop_assert_eq!(t.char_start, pos);
                prop_assert!(t.char_end > t.char_start);
                pos = t.char_end;
            }
            prop_assert_eq!(pos, s.len());
        }
    }
}
