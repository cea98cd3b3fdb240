// SPDX-License-Identifier: MIT OR Apache-2.0

//! Build an HRF-convolved design from word events, simulate three subjects
//! whose vertices respond to it, and fit ridge and OLS encoding models with
//! noise-ceiling normalization.
//!
//! ```text
//! cargo run --release --example encoding_model
//! ```

use compscore::encoding::{
    design_for_scans, hrf, run_encoding, AlphaSelection, BoldMatrix, ConvolutionOptions, EncodingOptions, EventSeries,
    Method, R2Mode,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("hrf: {}", [0.0, 2.5, 5.0, 10.0, 15.0, 25.0].map(|t| format!("h({t})={:.4}", hrf(t))).join(" "));

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Normal::new(0.0, 1.0)?;
    let (n_trs, tr, n_vertices) = (200, 2.0, 12);
    let mut times: Vec<f64> = (0..300).map(|_| rng.random_range(1.0..390.0)).collect();
    times.sort_by(f64::total_cmp);
    let values = times.iter().map(|_| vec![1.0, noise.sample(&mut rng)]).collect();
    let events = EventSeries::new(vec!["wordrate".into(), "surprisal".into()], times, values)?;
    let design = design_for_scans(&events, tr, n_trs, &ConvolutionOptions::default())?;
    println!("design: {} scans x {:?}", design.n_rows(), design.names);

    // vertex v responds with weight v/4 to word rate and -v/8 to surprisal
    let bolds: Vec<BoldMatrix> = (0..3)
        .map(|s| {
            let data = DMatrix::from_fn(n_trs, n_vertices, |t, v| {
                let x = &design.matrix;
                v as f64 / 4.0 * x[(t, 0)] - v as f64 / 8.0 * x[(t, 1)] + noise.sample(&mut rng)
            });
            BoldMatrix::new(format!("sub-{:02}", s + 1), tr, data)
        })
        .collect::<Result<_, _>>()?;
    let mask: Vec<usize> = (0..n_vertices).collect();

    for (label, opts) in [
        ("ridge, GCV", EncodingOptions::default()),
        ("ridge, 5-fold", EncodingOptions { alpha_selection: AlphaSelection::KFold(5), ..Default::default() }),
        ("OLS", EncodingOptions { method: Method::Ols, ..Default::default() }),
        ("OLS, held-out R2", EncodingOptions { method: Method::Ols, r2_mode: R2Mode::HeldOut, ..Default::default() }),
    ] {
        let results = run_encoding(&events, &bolds, &mask, &opts)?;
        println!("{label}:");
        for v in [0, 4, 11] {
            let r = &results[0].vertices[v];
            println!(
                "  vertex {v:>2}: beta [{:.3}, {:.3}] alpha {:<8} R2 {:.3} ceiling {:.3} normalized {}",
                r.beta[0],
                r.beta[1],
                r.alpha,
                r.r2,
                r.r2_isc.unwrap_or(f64::NAN),
                r.r2_norm.map_or("-".to_string(), |x| format!("{x:.3}"))
            );
        }
    }
    Ok(())
}
