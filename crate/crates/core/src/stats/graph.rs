// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{BufRead, BufReader, Read, Write};

use super::StatsError;

/// Undirected vertex adjacency, stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Duplicate edges are merged; self-loops and out-of-range ends are errors.
    pub fn new(n_vertices: usize, edges: &[(usize, usize)]) -> Result<Self, StatsError> {
        let mut neighbors = vec![Vec::new(); n_vertices];
        for &(u, v) in edges {
            if u >= n_vertices || v >= n_vertices {
                return Err(StatsError::Graph(format!("edge {u}-{v} out of range for {n_vertices} vertices")));
            }
            if u == v {
                return Err(StatsError::Graph(format!("self-loop at vertex {u}")));
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn n_vertices(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    /// Each edge once, with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(u, ns)| ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Reads `n_vertices=N` followed by `u v` lines. `#` starts a comment.
    pub fn read<R: Read>(reader: R) -> Result<Self, StatsError> {
        let mut n = None;
        let mut edges = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| StatsError::Graph(e.to_string()))?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || StatsError::Graph(format!("line {}: cannot parse {line:?}", i + 1));
            if n.is_none() {
                let value = line.strip_prefix("n_vertices=").ok_or_else(bad)?;
                n = Some(value.trim().parse::<usize>().map_err(|_| bad())?);
                continue;
            }
            let mut parts = line.split_whitespace().map(|p| p.parse::<usize>());
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => edges.push((u, v)),
                _ => return Err(bad()),
            }
        }
        let n = n.ok_or_else(|| StatsError::Graph("missing n_vertices= header".into()))?;
        Self::new(n, &edges)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "n_vertices={}", self.n_vertices())?;
        for (u, v) in self.edges() {
            writeln!(writer, "{u} {v}")?;
        }
        Ok(())
    }
}

/// Four-neighbour lattice; vertex `r * cols + c`.
pub fn grid_graph(rows: usize, cols: usize) -> AdjacencyGraph {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    AdjacencyGraph::new(rows * cols, &edges).expect("grid edges are valid")
}
