// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::graph::AdjacencyGraph;
use super::group::TMap;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// `t > threshold`
    #[default]
    Greater,
    /// `t < -threshold`
    Less,
    /// Either, with positive and negative cells clustered separately.
    Both,
}

impl Tail {
    fn sign(self, t: f64, threshold: f64) -> Option<bool> {
        match self {
            Tail::Greater => (t > threshold).then_some(true),
            Tail::Less => (t < -threshold).then_some(false),
            Tail::Both => {
                if t > threshold {
                    Some(true)
                } else if t < -threshold {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub threshold: f64,
    pub tail: Tail,
    /// Clusters spanning fewer distinct vertices are dropped.
    pub min_extent: usize,
    /// Also join the same vertex at consecutive condition indices.
    pub link_conditions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// `(vertex, condition)` cells, sorted.
    pub members: Vec<(usize, usize)>,
    /// Sum of t over members.
    pub mass: f64,
    /// Number of distinct vertices.
    pub extent: usize,
    pub p_value: Option<f64>,
}

/// Connected components of supra-threshold cells, largest |mass| first.
pub fn form_clusters(t: &TMap, graph: &AdjacencyGraph, opts: &ClusterOptions) -> Result<Vec<Cluster>, StatsError> {
    if !(opts.threshold > 0.0) {
        return Err(StatsError::InvalidInput(format!("cluster threshold must be positive, got {}", opts.threshold)));
    }
    if graph.n_vertices() != t.n_vertices {
        return Err(StatsError::InvalidInput(format!(
            "graph has {} vertices, map has {}",
            graph.n_vertices(),
            t.n_vertices
        )));
    }
    let nc = t.n_conditions;
    let supra: Vec<Option<bool>> = t.values.iter().map(|v| v.and_then(|v| opts.tail.sign(v, opts.threshold))).collect();
    let mut seen = vec![false; supra.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..supra.len() {
        let Some(sign) = supra[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(cell) = queue.pop_front() {
            members.push(cell);
            let (v, c) = (cell / nc, cell % nc);
            let spatial = graph.neighbors(v).iter().map(|&u| u * nc + c);
            let across = [c.checked_sub(1), Some(c + 1).filter(|&c| c < nc)]
                .into_iter()
                .flatten()
                .filter(|_| opts.link_conditions)
                .map(|c2| v * nc + c2);
            for next in spatial.chain(across) {
                if !seen[next] && supra[next] == Some(sign) {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        members.sort_unstable();
        let extent = members.iter().map(|m| m / nc).collect::<BTreeSet<_>>().len();
        if extent < opts.min_extent {
            continue;
        }
        let mass = members.iter().map(|&m| t.values[m].expect("supra cells are defined")).sum();
        clusters.push(Cluster { members: members.iter().map(|m| (m / nc, m % nc)).collect(), mass, extent, p_value: None });
    }
    clusters.sort_by(|a, b| b.mass.abs().total_cmp(&a.mass.abs()).then(a.members[0].cmp(&b.members[0])));
    Ok(clusters)
}
