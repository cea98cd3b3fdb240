// SPDX-License-Identifier: MIT OR Apache-2.0

//! Write the synthetic dataset and run every pipeline command on it, the
//! same steps as
//!
//! ```text
//! compscore --config DIR/config.json score
//! compscore --config DIR/config.json calibrate-k
//! ...
//! ```
//!
//! ```text
//! cargo run --release --example full_pipeline [DIR]
//! ```

use std::path::PathBuf;

use compscore::pipeline::{cmd_calibrate, cmd_cluster, cmd_controls, cmd_encode, cmd_report, cmd_score};
use compscore::synth::{write_dataset, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("compscore-demo"));
    let data = write_dataset(&dir, &SynthOptions::default())?;
    let cfg = &data.config;
    println!("dataset in {}: {} words, {} scans, planted patch of {} vertices", dir.display(), data.n_words, data.n_trs, data.patch.len());

    let scores = cmd_score(cfg)?;
    println!("score: {} rows", scores.rows.len());
    let k = cmd_calibrate(cfg)?;
    println!("calibrate-k: majority k {:.1} at coverage {}", k.overall_mean_k, k.coverage);
    let controls = cmd_controls(cfg)?;
    println!("controls: {} words", controls.rows.len());

    let summary = cmd_encode(cfg)?;
    println!("encode, normalized R2 over valid vertices:");
    for s in &summary.sets {
        println!("  {:<20} max {:.3}  mean {:.3}", s.set, s.max.unwrap_or(f64::NAN), s.mean.unwrap_or(f64::NAN));
    }

    let clusters = cmd_cluster(cfg)?;
    for c in &clusters.clusters {
        let hits = c.members.iter().filter(|m| data.patch.contains(&m.0)).count();
        println!("cluster on {}: {} vertices ({hits} in the patch), p {:.4}", cfg.cluster_set, c.extent, c.p_value.unwrap_or(1.0));
    }

    let report = cmd_report(cfg)?;
    println!("report: layer means {:?}, CV {:.3}", report.layer_means, report.layer_mean_cv);
    println!("outputs under {}", cfg.out_dir.display());
    Ok(())
}
