// SPDX-License-Identifier: MIT OR Apache-2.0

//! Group-level inference: one-sample t maps and cluster-mass permutation
//! tests over a vertex adjacency graph.

mod clusters;
mod graph;
mod group;
mod permutation;

use thiserror::Error;

pub use clusters::{form_clusters, Cluster, ClusterOptions, Tail};
pub use graph::{grid_graph, AdjacencyGraph};
pub use group::{critical_t, one_sample_t, GroupMap, TMap};
pub use permutation::{permutation_signs, permutation_test, ClusterResult, NullSummary, PermutationOptions};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{0}")]
    InvalidInput(String),
    #[error("graph: {0}")]
    Graph(String),
}
