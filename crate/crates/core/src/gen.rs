//! Synthetic graph generators for tests, benchmarks and quick experiments.
//!
//! All generators are seeded and deterministic. Node `i` gets the label
//! `n{i}`; helpers materialize edge lists either as in-memory [`Edge`]s under
//! a namespace or as TSV files matching the ingestion formats.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CleoraError, Result};
use crate::expansion::Edge;
use crate::hashing::EntityId;
use crate::ingest::Dictionary;

#[derive(Debug, Clone)]
pub struct GeneratedGraph {
    pub node_count: usize,
    /// Undirected edges as node-index pairs. No duplicates, no self-loops.
    pub edges: Vec<(u32, u32)>,
    /// Per-node class assignment; empty when the generator has no classes.
    pub classes: Vec<usize>,
}

pub fn node_label(i: u32) -> String {
    format!("n{i}")
}

/// Stochastic block model: `blocks` equal groups over `nodes` nodes, edge
/// probability `p_in` within a group and `p_out` across groups. Classes are
/// the block assignments.
pub fn sbm(nodes: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> GeneratedGraph {
    assert!(blocks >= 1 && nodes >= blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block_of = |i: usize| i * blocks / nodes;
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in (i + 1)..nodes {
            let p = if block_of(i) == block_of(j) { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((i as u32, j as u32));
            }
        }
    }
    GeneratedGraph {
        node_count: nodes,
        edges,
        classes: (0..nodes).map(block_of).collect(),
    }
}

/// Uniform random graph with exactly `edge_count` distinct edges.
pub fn gnm(nodes: usize, edge_count: usize, seed: u64) -> GeneratedGraph {
    assert!(nodes >= 2);
    let max_edges = nodes * (nodes - 1) / 2;
    assert!(edge_count <= max_edges, "{edge_count} > {max_edges}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::with_capacity(edge_count);
    let mut edges = Vec::with_capacity(edge_count);
    while edges.len() < edge_count {
        let a = rng.random_range(0..nodes as u32);
        let b = rng.random_range(0..nodes as u32);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    GeneratedGraph {
        node_count: nodes,
        edges,
        classes: Vec::new(),
    }
}

/// Wheel graph: node 0 is the hub of an `n-1` cycle. Connected and, for even
/// `n`, non-bipartite (every spoke closes a triangle).
pub fn wheel(nodes: usize) -> GeneratedGraph {
    assert!(nodes >= 4);
    let mut edges = Vec::new();
    for i in 1..nodes {
        edges.push((0, i as u32));
        let next = if i == nodes - 1 { 1 } else { i as u32 + 1 };
        edges.push((i as u32, next));
    }
    GeneratedGraph {
        node_count: nodes,
        edges,
        classes: Vec::new(),
    }
}

impl GeneratedGraph {
    /// Materialize as entity edges under `namespace`, interning every label.
    pub fn entity_edges(&self, namespace: &str) -> Result<(Vec<Edge>, Dictionary)> {
        let mut dict = Dictionary::new();
        let mut out = Vec::with_capacity(self.edges.len());
        for &(a, b) in &self.edges {
            let from = dict.intern(namespace, &node_label(a))?;
            let to = dict.intern(namespace, &node_label(b))?;
            out.push(Edge { from, to, weight: 1.0 });
        }
        Ok((out, dict))
    }

    /// Per-node `(id, class)` labels under `namespace`.
    pub fn entity_classes(&self, namespace: &str) -> Vec<(EntityId, String)> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                (
                    EntityId::from_label(namespace, &node_label(i as u32)),
                    format!("c{c}"),
                )
            })
            .collect()
    }

    /// Seeded 80/20-style split of the edge list.
    pub fn edge_split(&self, train_fraction: f64, seed: u64) -> (Vec<(u32, u32)>, Vec<(u32, u32)>) {
        use rand::seq::SliceRandom;
        let mut edges = self.edges.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        edges.shuffle(&mut rng);
        let cut = ((edges.len() as f64) * train_fraction).round() as usize;
        let cut = cut.min(edges.len());
        let test = edges.split_off(cut);
        (edges, test)
    }
}

/// Write `edges` as single-column reflexive TSV rows (`na nb` per line), the
/// shape ingested with schema `complex::reflexive::<column>`.
pub fn write_reflexive_tsv(edges: &[(u32, u32)], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CleoraError::io(path, e))?,
    );
    for &(a, b) in edges {
        writeln!(out, "{} {}", node_label(a), node_label(b))
            .map_err(|e| CleoraError::io(path, e))?;
    }
    out.flush().map_err(|e| CleoraError::io(path, e))
}

/// Write `edges` as two-column TSV rows (`na<TAB>nb` per line).
pub fn write_pair_tsv(edges: &[(u32, u32)], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CleoraError::io(path, e))?,
    );
    for &(a, b) in edges {
        writeln!(out, "{}\t{}", node_label(a), node_label(b))
            .map_err(|e| CleoraError::io(path, e))?;
    }
    out.flush().map_err(|e| CleoraError::io(path, e))
}

/// Write per-node labels as `label<TAB>class` rows.
pub fn write_labels_tsv(graph: &GeneratedGraph, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CleoraError::io(path, e))?,
    );
    for (i, &c) in graph.classes.iter().enumerate() {
        writeln!(out, "{}\tc{c}", node_label(i as u32)).map_err(|e| CleoraError::io(path, e))?;
    }
    out.flush().map_err(|e| CleoraError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_is_deterministic_and_blocky() {
        let g1 = sbm(60, 2, 0.3, 0.01, 7);
        let g2 = sbm(60, 2, 0.3, 0.01, 7);
        assert_eq!(g1.edges, g2.edges);
        let within = g1
            .edges
            .iter()
            .filter(|&&(a, b)| g1.classes[a as usize] == g1.classes[b as usize])
            .count();
        assert!(within * 2 > g1.edges.len(), "expected mostly in-block edges");
    }

    #[test]
    fn gnm_has_exact_edge_count() {
        let g = gnm(30, 100, 3);
        assert_eq!(g.edges.len(), 100);
        let mut dedup = g.edges.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 100);
        assert!(g.edges.iter().all(|&(a, b)| a != b));
    }

    #[test]
    fn wheel_is_connected_with_triangles() {
        let g = wheel(10);
        assert_eq!(g.edges.len(), 18);
    }

    #[test]
    fn split_partitions_edges() {
        let g = gnm(20, 50, 1);
        let (train, test) = g.edge_split(0.8, 5);
        assert_eq!(train.len() + test.len(), 50);
        assert_eq!(train.len(), 40);
    }
}
