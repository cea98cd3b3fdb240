// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use compscore::stats::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// 20 subjects on a 20x20 grid with unit noise; `shift` is added inside a
/// 5x6 patch (30 vertices).
fn grid_map(seed: u64, shift: f64, n_conditions: usize) -> GroupMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::new();
    for _ in 0..20 {
        for v in 0..400 {
            let (r, c) = (v / 20, v % 20);
            let inside = (5..10).contains(&r) && (5..11).contains(&c);
            for _ in 0..n_conditions {
                data.push(noise.sample(&mut rng) + if inside { shift } else { 0.0 });
            }
        }
    }
    let names = (0..n_conditions).map(|c| format!("layer_{c}")).collect();
    GroupMap::new(20, 400, names, data).unwrap()
}

#[test]
fn planted_patch_is_found() {
    let g = grid_graph(20, 20);
    let opts = PermutationOptions { n_perms: 200, seed: 1, link_conditions: false, ..Default::default() };
    let r = permutation_test(&grid_map(3, 1.5, 1), &g, &opts).unwrap();
    let best = &r.clusters[0];
    assert!(best.p_value.unwrap() < 0.05);
    let patch: BTreeSet<usize> = (0..400).filter(|v| (5..10).contains(&(v / 20)) && (5..11).contains(&(v % 20))).collect();
    let found: BTreeSet<usize> = best.members.iter().map(|m| m.0).collect();
    assert!(found.intersection(&patch).count() >= 25, "{found:?}");
    assert!(r.clusters.iter().all(|c| c.extent >= 20));
}

#[test]
fn identical_result_for_any_thread_count() {
    let g = grid_graph(20, 20);
    let map = grid_map(8, 0.8, 3);
    let opts = PermutationOptions { n_perms: 300, seed: 42, min_extent: 5, ..Default::default() };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| permutation_test(&map, &g, &opts).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.null_max, b.null_max);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn negating_the_map_negates_t_and_preserves_two_sided_null() {
    let g = grid_graph(20, 20);
    let map = grid_map(5, 0.4, 2);
    let (t, tn) = (one_sample_t(&map), one_sample_t(&map.negated()));
    for (a, b) in t.values.iter().zip(&tn.values) {
        assert_eq!(a.map(|v| -v), *b);
    }
    let opts = PermutationOptions { n_perms: 100, seed: 9, tail: Tail::Both, min_extent: 1, ..Default::default() };
    let a = permutation_test(&map, &g, &opts).unwrap();
    let b = permutation_test(&map.negated(), &g, &opts).unwrap();
    assert_eq!(a.null_max, b.null_max);
    let masses: Vec<f64> = a.clusters.iter().map(|c| -c.mass).collect();
    assert_eq!(masses, b.clusters.iter().map(|c| c.mass).collect::<Vec<_>>());
}

#[test]
fn p_values_use_the_smoothed_estimator() {
    let g = grid_graph(20, 20);
    let opts = PermutationOptions { n_perms: 50, seed: 2, min_extent: 1, link_conditions: false, ..Default::default() };
    let r = permutation_test(&grid_map(4, 1.0, 1), &g, &opts).unwrap();
    for c in &r.clusters {
        let exceed = r.null_max.iter().filter(|&&m| m >= c.mass.abs()).count();
        assert_eq!(c.p_value.unwrap(), (1 + exceed) as f64 / 51.0);
        assert!(c.p_value.unwrap() > 0.0 && c.p_value.unwrap() <= 1.0);
    }
}

fn random_tmap(seed: u64, n_vertices: usize, n_conditions: usize) -> TMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.5, 1.5).unwrap();
    let values = (0..n_vertices * n_conditions).map(|_| Some(d.sample(&mut rng))).collect();
    TMap { n_vertices, n_conditions, df: 10, values }
}

proptest! {
    #[test]
    fn clusters_partition_the_supra_threshold_cells(seed in any::<u64>(), link in any::<bool>()) {
        let g = grid_graph(6, 6);
        let t = random_tmap(seed, 36, 3);
        let opts = ClusterOptions { threshold: 1.0, tail: Tail::Both, min_extent: 1, link_conditions: link };
        let clusters = form_clusters(&t, &g, &opts).unwrap();
        let mut seen = BTreeSet::new();
        for c in &clusters {
            for m in &c.members {
                prop_assert!(seen.insert(*m), "cell {:?} in two clusters", m);
            }
        }
        let supra: BTreeSet<(usize, usize)> = (0..36 * 3)
            .filter(|&i| t.values[i].unwrap().abs() > 1.0)
            .map(|i| (i / 3, i % 3))
            .collect();
        prop_assert_eq!(seen, supra);
    }

    #[test]
    fn raising_min_extent_never_adds_clusters(seed in any::<u64>()) {
        let g = grid_graph(6, 6);
        let t = random_tmap(seed, 36, 2);
        let counts: Vec<usize> = (1..8)
            .map(|m| {
                let opts = ClusterOptions { threshold: 1.0, tail: Tail::Greater, min_extent: m, link_conditions: true };
                form_clusters(&t, &g, &opts).unwrap().len()
            })
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn graph_file_round_trip() {
    let g = grid_graph(4, 5);
    let mut buf = Vec::new();
    g.write(&mut buf).unwrap();
    assert_eq!(AdjacencyGraph::read(buf.as_slice()).unwrap(), g);
}
