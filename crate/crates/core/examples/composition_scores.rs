// SPDX-License-Identifier: MIT OR Apache-2.0

//! Composition Scores for a few sentences: per-layer means, the layer
//! correlation matrix and the most and least composed prefixes.
//!
//! ```text
//! cargo run --release --example composition_scores
//! ```

use compscore::composition::{extreme_prefixes, layerwise_correlation, score_text, ScoreMode};
use compscore::model::{init_random_model_with_tokenizer, ModelConfig, TokenizerVocab};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sentences = [
        "the old teacher explained the new idea to the class",
        "a small dog followed the children home after school",
        "every morning she wrote a long letter to her brother",
        "the river near the village rose after the heavy rain",
    ];
    let tokenizer = TokenizerVocab::from_corpus(&sentences.join("\n"), 64)?;
    let model = init_random_model_with_tokenizer(ModelConfig::toy(512, 64, 4, 256), tokenizer, 1)?;

    let table = score_text(&model, &sentences, ScoreMode::Exact)?;
    println!("{} rows over {} layers", table.rows.len(), table.n_layers);
    for (l, m) in table.layer_means().iter().enumerate() {
        println!("layer {l}: mean score {m:.4}");
    }

    let corr = layerwise_correlation(&table)?;
    println!("layer correlations:");
    for row in corr.rows() {
        println!("  {}", row.iter().map(|r| format!("{r:6.3}")).collect::<Vec<_>>().join(" "));
    }

    let e = extreme_prefixes(&table, 2, 3)?;
    println!("layer 2, lowest:");
    for (prefix, s) in &e.low {
        println!("  {s:.4}  {prefix}");
    }
    println!("layer 2, highest:");
    for (prefix, s) in &e.high {
        println!("  {s:.4}  {prefix}");
    }

    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    println!("\n{}", String::from_utf8(csv)?.lines().take(5).collect::<Vec<_>>().join("\n"));
    Ok(())
}
