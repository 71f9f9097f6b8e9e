//! Memory accounting for one relation-pair graph.
//!
//! Training allocates three families of objects: `|V|` node-map entries
//! (40 bytes each), `2|E|` transition entries (24 bytes each — an undirected
//! edge is stored in both directions), and `2 d |V|` embedding values
//! (4 bytes each — current and next iterate). Total object count is
//! `|V| (1 + 2d) + 2|E|`, linear in nodes and edges.

use serde::{Deserialize, Serialize};

use crate::sparsemat::SparseTransition;

pub const NODE_OBJECT_BYTES: u64 = 40;
pub const TRANSITION_OBJECT_BYTES: u64 = 24;
pub const EMBEDDING_OBJECT_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModel {
    /// Node-map entries (the P matrix of the construction phase).
    pub p_objects: u64,
    /// Stored transition entries (the M matrix).
    pub m_objects: u64,
    /// Embedding values for the two live iterates (the T matrices).
    pub t_objects: u64,
}

impl MemoryModel {
    /// Predicted counts for a graph with `nodes` nodes and `edges` distinct
    /// undirected edges at dimensionality `dim`.
    pub fn estimate(nodes: u64, edges: u64, dim: u64) -> MemoryModel {
        MemoryModel {
            p_objects: nodes,
            m_objects: 2 * edges,
            t_objects: 2 * dim * nodes,
        }
    }

    /// Counts measured from a built transition matrix.
    pub fn measured(transition: &SparseTransition, dim: u64) -> MemoryModel {
        MemoryModel {
            p_objects: transition.node_count() as u64,
            m_objects: transition.entry_count() as u64,
            t_objects: 2 * dim * transition.node_count() as u64,
        }
    }

    pub fn total_objects(&self) -> u64 {
        self.p_objects + self.m_objects + self.t_objects
    }

    pub fn bytes(&self) -> u64 {
        self.p_objects * NODE_OBJECT_BYTES
            + self.m_objects * TRANSITION_OBJECT_BYTES
            + self.t_objects * EMBEDDING_OBJECT_BYTES
    }
}

impl std::fmt::Display for MemoryModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.1} MiB (P: {} x {}B, M: {} x {}B, T: {} x {}B)",
            self.bytes() as f64 / (1024.0 * 1024.0),
            self.p_objects,
            NODE_OBJECT_BYTES,
            self.m_objects,
            TRANSITION_OBJECT_BYTES,
            self.t_objects,
            EMBEDDING_OBJECT_BYTES,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::Edge;
    use crate::hashing::EntityId;

    #[test]
    fn estimate_matches_measurement_on_simple_graphs() {
        // a cycle: no duplicate edges, no self-loops
        let n = 12u64;
        let edges: Vec<Edge> = (0..n)
            .map(|i| Edge {
                from: EntityId::from_label("n", &format!("v{i}")),
                to: EntityId::from_label("n", &format!("v{}", (i + 1) % n)),
                weight: 1.0,
            })
            .collect();
        let m = SparseTransition::build(&edges).unwrap();
        let estimate = MemoryModel::estimate(n, n, 16);
        let measured = MemoryModel::measured(&m, 16);
        assert_eq!(estimate, measured);
        assert_eq!(measured.total_objects(), n * (1 + 2 * 16) + 2 * n);
    }
}
