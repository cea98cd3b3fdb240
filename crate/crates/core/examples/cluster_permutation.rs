// SPDX-License-Identifier: MIT OR Apache-2.0

//! Group inference on a 20 x 20 grid: one-sample t per vertex and
//! condition, then a sign-flip cluster-mass permutation test that links
//! neighbouring vertices and consecutive conditions.
//!
//! ```text
//! cargo run --release --example cluster_permutation
//! ```

use compscore::stats::{critical_t, grid_graph, one_sample_t, permutation_test, GroupMap, PermutationOptions, Tail};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n_subjects, rows, cols, n_layers) = (16, 20, 20, 6);
    let graph = grid_graph(rows, cols);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 1.0)?;
    // an effect in a 6 x 6 patch at layers 2..=4
    let mut data = Vec::new();
    for _ in 0..n_subjects {
        for v in 0..rows * cols {
            let inside = (4..10).contains(&(v / cols)) && (8..14).contains(&(v % cols));
            for layer in 0..n_layers {
                let shift = if inside && (2..=4).contains(&layer) { 1.2 } else { 0.0 };
                data.push(noise.sample(&mut rng) + shift);
            }
        }
    }
    let names = (0..n_layers).map(|l| format!("layer_{l}")).collect();
    let map = GroupMap::new(n_subjects, rows * cols, names, data)?;

    let t = one_sample_t(&map);
    let thr = critical_t(t.df, 0.05)?;
    let supra = t.values.iter().filter(|v| v.is_some_and(|v| v > thr)).count();
    println!("df {}, one-tailed threshold t > {thr:.3}, {supra} supra-threshold cells", t.df);

    let opts = PermutationOptions { n_perms: 2000, seed: 5, min_extent: 10, tail: Tail::Greater, ..Default::default() };
    let result = permutation_test(&map, &graph, &opts)?;
    println!(
        "null max mass: mean {:.1}, 95th percentile {:.1}, max {:.1}",
        result.null.mean, result.null.q95, result.null.max
    );
    for c in &result.clusters {
        let layers: std::collections::BTreeSet<usize> = c.members.iter().map(|m| m.1).collect();
        println!(
            "cluster: {} cells, {} vertices, layers {:?}, mass {:.1}, p {:.4}",
            c.members.len(),
            c.extent,
            layers,
            c.mass,
            c.p_value.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
