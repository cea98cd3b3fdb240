// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tokenize a sentence with a corpus-built vocabulary, run a random-init
//! model over it and look at the recorded feed-forward internals.
//!
//! ```text
//! cargo run --example tokenize_and_trace
//! ```

use compscore::model::{init_random_model_with_tokenizer, word_ranges, ModelConfig, TokenizerVocab};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = "the cat sat on the mat\nthe dog sat on the log\n";
    let tokenizer = TokenizerVocab::from_corpus(corpus, 16)?;
    let model = init_random_model_with_tokenizer(ModelConfig::toy(512, 64, 2, 256), tokenizer, 42)?;

    // "catalogue" is not in the vocabulary and falls back to pieces and bytes
    let text = "the cat sat on the catalogue";
    let spans = model.tokenizer.tokenize(text);
    for s in &spans {
        let piece = model.tokenizer.token(s.token_id).unwrap_or("?");
        println!("{:>4}  {:<10?} bytes {:>2}..{:<2} word {}", s.token_id, piece, s.char_start, s.char_end, s.word_index);
    }
    println!("words: {:?}", word_ranges(text).iter().map(|&(a, b)| &text[a..b]).collect::<Vec<_>>());

    let ids: Vec<u32> = spans.iter().map(|s| s.token_id).collect();
    let trace = model.forward_with_trace(&ids)?;
    let last = ids.len() - 1;
    for layer in 0..trace.n_layers {
        let m = trace.activations(layer, last);
        let active = m.iter().filter(|a| **a != 0.0).count();
        let norm: f32 = trace.hidden_state(layer, last).iter().map(|x| x * x).sum::<f32>().sqrt();
        println!("layer {layer}: {active}/{} neurons active, |h| = {norm:.3}", m.len());
    }
    let logits = trace.logits(last);
    // ids past the tokenizer's length are unused rows of the embedding
    let best = (0..model.tokenizer.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap_or(0);
    println!("next-token argmax: {best} {:?}", model.tokenizer.token(best as u32).unwrap_or("?"));
    Ok(())
}
