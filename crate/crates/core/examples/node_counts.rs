// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-word node counts under top-down, bottom-up and left-corner parsing,
//! and the joined control table with word rate and log frequency.
//!
//! ```text
//! cargo run --example node_counts
//! ```

use compscore::controls::{build_control_table, node_counts, parse_bracketed, FrequencyTable, Strategy, TimingRow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trees = parse_bracketed(
        "(S (NP the dog) (VP barked))\n\
         (S (NP the (ADJP very old) man) (VP saw (NP a ship) (PP near (NP the harbour))))\n",
    )?;
    for tree in &trees {
        println!("{}", tree.to_bracketed());
        let words = tree.terminals();
        for s in Strategy::ALL {
            let counts = node_counts(tree, s);
            let cells: Vec<String> = words.iter().zip(&counts).map(|(w, c)| format!("{w}:{c}")).collect();
            println!("  {:<11} {}", format!("{s:?}"), cells.join(" "));
        }
        println!("  {} nonterminals", tree.n_nonterminals());
    }

    let freq = FrequencyTable::from_counts(
        [("the", 60_000.0), ("a", 45_000.0), ("dog", 900.0), ("man", 1_500.0), ("saw", 800.0), ("old", 700.0)],
        1e-8,
    )?;
    let mut timing = Vec::new();
    let mut t = 0.5;
    for tree in &trees {
        for (i, w) in tree.terminals().iter().enumerate() {
            timing.push(TimingRow { sentence_id: tree.sentence_id, word_index: i, word: w.to_string(), onset_s: t, offset_s: t + 0.3 });
            t += 0.35;
        }
        t += 0.6;
    }
    let table = build_control_table(&trees, &freq, &timing)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}
