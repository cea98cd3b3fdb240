// SPDX-License-Identifier: MIT OR Apache-2.0

//! Calibrate the approximate score's neuron budget: the mean number of
//! top-|activation| neurons needed to cover half the layer's total, then
//! compare approximate against exact scores at that budget.
//!
//! ```text
//! cargo run --release --example majority_k
//! ```

use compscore::composition::{calibrate_majority_k_sequences, score_text, ScoreMode};
use compscore::model::{init_random_model_with_tokenizer, ModelConfig, TokenizerVocab};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sentences = [
        "the lamp lit the quiet room while the rain fell",
        "children played in the garden behind the house",
        "the market was busy after the long walk through the city",
    ];
    let tokenizer = TokenizerVocab::from_corpus(&sentences.join("\n"), 64)?;
    let model = init_random_model_with_tokenizer(ModelConfig::toy(512, 64, 4, 256), tokenizer, 3)?;
    let seqs: Vec<Vec<u32>> = sentences.iter().map(|s| model.encode(s)).collect();

    for coverage in [0.25, 0.5, 0.9] {
        let r = calibrate_majority_k_sequences(&model, &seqs, coverage)?;
        let per_layer: Vec<String> = r.per_layer_mean_k.iter().map(|k| format!("{k:.1}")).collect();
        println!(
            "coverage {coverage}: overall k {:.2}, token-mean k {:.2}, per layer [{}]",
            r.overall_mean_k,
            r.token_mean_k,
            per_layer.join(", ")
        );
    }

    let k = calibrate_majority_k_sequences(&model, &seqs, 0.5)?.overall_mean_k.round() as usize;
    let exact = score_text(&model, &sentences, ScoreMode::Exact)?;
    for budget in [1, k, 2 * k, model.config.d_ff] {
        let approx = score_text(&model, &sentences, ScoreMode::Approx(budget))?;
        let mad = exact.rows.iter().zip(&approx.rows).map(|(a, b)| (a.score - b.score).abs()).sum::<f64>()
            / exact.rows.len() as f64;
        println!("d' = {budget:>3}: mean |approx - exact| = {mad:.4}");
    }
    Ok(())
}
