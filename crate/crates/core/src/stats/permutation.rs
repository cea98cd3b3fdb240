// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clusters::{form_clusters, Cluster, ClusterOptions, Tail};
use super::graph::AdjacencyGraph;
use super::group::{critical_t, one_sample_t, t_with_signs, GroupMap};
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationOptions {
    pub n_perms: usize,
    pub seed: u64,
    /// One-tailed p for the cluster-forming threshold.
    pub p_threshold: f64,
    pub tail: Tail,
    pub min_extent: usize,
    pub link_conditions: bool,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self { n_perms: 10_000, seed: 0, p_threshold: 0.05, tail: Tail::Greater, min_extent: 20, link_conditions: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub n_perms: usize,
    pub mean: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub threshold_t: f64,
    pub df: usize,
    pub condition_names: Vec<String>,
    pub clusters: Vec<Cluster>,
    pub null: NullSummary,
    pub params: PermutationOptions,
    #[serde(skip)]
    pub null_max: Vec<f64>,
}

impl ClusterResult {
    pub fn write_null_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "permutation,max_mass")?;
        for (i, m) in self.null_max.iter().enumerate() {
            writeln!(writer, "{i},{m}")?;
        }
        Ok(())
    }

    pub fn min_p(&self) -> Option<f64> {
        self.clusters.iter().filter_map(|c| c.p_value).min_by(f64::total_cmp)
    }
}

/// Sign of each subject for permutation `k`: stream `k` of a ChaCha8
/// generator keyed by `seed`, so results do not depend on thread count.
pub fn permutation_signs(seed: u64, k: u64, n_subjects: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    (0..n_subjects).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn max_mass(clusters: &[Cluster]) -> f64 {
    clusters.iter().map(|c| c.mass.abs()).fold(0.0, f64::max)
}

/// Cluster-mass permutation test with subject-level sign flips.
/// Cluster p is `(1 + #{null max >= |mass|}) / (1 + n_perms)`.
pub fn permutation_test(
    map: &GroupMap,
    graph: &AdjacencyGraph,
    opts: &PermutationOptions,
) -> Result<ClusterResult, StatsError> {
    if opts.n_perms == 0 {
        return Err(StatsError::InvalidInput("n_perms must be at least 1".into()));
    }
    let df = map.n_subjects() - 1;
    let threshold_t = critical_t(df, opts.p_threshold)?;
    let copts = ClusterOptions {
        threshold: threshold_t,
        tail: opts.tail,
        min_extent: opts.min_extent,
        link_conditions: opts.link_conditions,
    };
    let mut clusters = form_clusters(&one_sample_t(map), graph, &copts)?;
    let null_max: Vec<f64> = (0..opts.n_perms as u64)
        .into_par_iter()
        .map(|k| {
            let signs = permutation_signs(opts.seed, k, map.n_subjects());
            form_clusters(&t_with_signs(map, &signs), graph, &copts).map(|c| max_mass(&c))
        })
        .collect::<Result<_, _>>()?;
    let denom = (1 + opts.n_perms) as f64;
    for c in &mut clusters {
        let exceed = null_max.iter().filter(|&&m| m >= c.mass.abs()).count();
        c.p_value = Some((1 + exceed) as f64 / denom);
    }
    let mut sorted = null_max.clone();
    sorted.sort_by(f64::total_cmp);
    let q95 = sorted[((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    let null = NullSummary {
        n_perms: opts.n_perms,
        mean: null_max.iter().sum::<f64>() / opts.n_perms as f64,
        q95,
        max: *sorted.last().expect("n_perms >= 1"),
    };
    Ok(ClusterResult { threshold_t, df, condition_names: map.condition_names().to_vec(), clusters, null, params: *opts, null_max })
}
