//! Chunked embedding: split the edge set into Q chunks, embed each chunk
//! independently, and merge the per-chunk matrices by per-node occurrence
//! weights.
//!
//! A node's occurrence count in a chunk is its incident edge-endpoint count
//! there (a self-loop counts twice). Merge weights are
//! `w_qv = count_q(v) / sum_k count_k(v)`, so they sum to one per node and
//! the merged row is a convex combination of the chunk rows. No normalization
//! is applied after merging; callers who need unit vectors opt in separately.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{CleoraError, Result};
use crate::expansion::Edge;
use crate::hashing::{xxh64, EntityId};
use crate::sparsemat::{EmbeddingMatrix, NodeIndex};

/// Edge-to-chunk assignment plus per-node occurrence counts per chunk.
#[derive(Debug, Clone)]
pub struct ChunkPlan {
    chunk_count: usize,
    assignment: Vec<u32>,
    occurrences: Vec<HashMap<EntityId, u64>>,
    totals: HashMap<EntityId, u64>,
}

impl ChunkPlan {
    pub fn chunk_count(&self) -> usize {
        self.chunk_count
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn occurrences(&self, chunk: usize) -> &HashMap<EntityId, u64> {
        &self.occurrences[chunk]
    }

    pub fn total_occurrences(&self, id: EntityId) -> Option<u64> {
        self.totals.get(&id).copied()
    }

    /// `w_qv` for every chunk; zero where the node does not occur.
    pub fn chunk_weights(&self, id: EntityId) -> Result<Vec<f64>> {
        let total = self.total_occurrences(id).ok_or_else(|| {
            CleoraError::Config(format!("node {id} does not occur in any chunk"))
        })?;
        Ok(self
            .occurrences
            .iter()
            .map(|occ| occ.get(&id).map_or(0.0, |&c| c as f64 / total as f64))
            .collect())
    }
}

/// Deterministically split `edges` into `chunk_count` chunks.
///
/// Edges are ordered by a seeded hash of their endpoints and dealt round-robin
/// over that order, so every chunk is non-empty whenever `chunk_count <=
/// |E|`, sizes differ by at most one, and the same `(edges, Q, seed)` always
/// produces the same assignment. Within a chunk, edges keep file order.
pub fn split_graph(
    edges: &[Edge],
    chunk_count: usize,
    seed: u64,
) -> Result<(ChunkPlan, Vec<Vec<Edge>>)> {
    if chunk_count == 0 {
        return Err(CleoraError::Config("chunk count must be >= 1".into()));
    }
    if chunk_count > edges.len() {
        return Err(CleoraError::Config(format!(
            "chunk count {chunk_count} exceeds edge count {}",
            edges.len()
        )));
    }

    let mut order: Vec<usize> = (0..edges.len()).collect();
    let keys: Vec<u64> = edges
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (lo, hi) = if e.from.0 <= e.to.0 {
                (e.from.0, e.to.0)
            } else {
                (e.to.0, e.from.0)
            };
            let mut bytes = [0u8; 24];
            bytes[0..8].copy_from_slice(&lo.to_le_bytes());
            bytes[8..16].copy_from_slice(&hi.to_le_bytes());
            bytes[16..24].copy_from_slice(&(i as u64).to_le_bytes());
            xxh64(&bytes, seed)
        })
        .collect();
    order.sort_by_key(|&i| (keys[i], i));

    let mut assignment = vec![0u32; edges.len()];
    for (position, &edge_idx) in order.iter().enumerate() {
        assignment[edge_idx] = (position % chunk_count) as u32;
    }

    let mut chunk_edges: Vec<Vec<Edge>> = vec![Vec::new(); chunk_count];
    let mut occurrences: Vec<HashMap<EntityId, u64>> =
        vec![HashMap::new(); chunk_count];
    let mut totals: HashMap<EntityId, u64> = HashMap::new();
    for (edge, &chunk) in edges.iter().zip(&assignment) {
        let q = chunk as usize;
        chunk_edges[q].push(*edge);
        for endpoint in [edge.from, edge.to] {
            *occurrences[q].entry(endpoint).or_insert(0) += 1;
            *totals.entry(endpoint).or_insert(0) += 1;
        }
    }

    Ok((
        ChunkPlan {
            chunk_count,
            assignment,
            occurrences,
            totals,
        },
        chunk_edges,
    ))
}

/// One chunk's embedding with its own node index.
#[derive(Debug, Clone)]
pub struct ChunkEmbedding {
    pub index: NodeIndex,
    pub matrix: EmbeddingMatrix,
}

/// Merge chunk matrices into a matrix over `global`:
/// `T_v = sum_q w_qv * T^q_v`. Rows missing from a chunk contribute zero.
pub fn merge_embeddings(
    chunks: &[ChunkEmbedding],
    plan: &ChunkPlan,
    global: &NodeIndex,
) -> Result<EmbeddingMatrix> {
    if chunks.len() != plan.chunk_count() {
        return Err(CleoraError::Internal(format!(
            "plan has {} chunks but {} matrices were supplied",
            plan.chunk_count(),
            chunks.len()
        )));
    }
    let Some(dim) = chunks.first().map(|c| c.matrix.dim()) else {
        return Err(CleoraError::Internal("no chunks to merge".into()));
    };
    if chunks.iter().any(|c| c.matrix.dim() != dim) {
        return Err(CleoraError::Internal(
            "chunk embeddings disagree on dimensionality".into(),
        ));
    }

    let mut out = EmbeddingMatrix::zeros(global.len(), dim);
    let rows: Vec<(usize, Vec<f32>)> = (0..global.len())
        .into_par_iter()
        .map(|r| {
            let id = global.id_at(r);
            let total = plan.total_occurrences(id).unwrap_or(0);
            let mut acc: Option<Vec<f64>> = None;
            if total > 0 {
                for (q, chunk) in chunks.iter().enumerate() {
                    let Some(&count) = plan.occurrences(q).get(&id) else {
                        continue;
                    };
                    let Some(pos) = chunk.index.position(id) else {
                        continue;
                    };
                    let w = count as f64 / total as f64;
                    let row = chunk.matrix.row(pos as usize);
                    match &mut acc {
                        // start from the first contribution so a lone chunk
                        // merges bit-exactly
                        None => acc = Some(row.iter().map(|&x| w * x as f64).collect()),
                        Some(acc) => {
                            for (a, &x) in acc.iter_mut().zip(row) {
                                *a += w * x as f64;
                            }
                        }
                    }
                }
            }
            let row = match acc {
                Some(acc) => acc.into_iter().map(|x| x as f32).collect(),
                None => vec![0.0f32; dim],
            };
            (r, row)
        })
        .collect();
    for (r, row) in rows {
        out.row_mut(r).copy_from_slice(&row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(label: &str) -> EntityId {
        EntityId::from_label("n", label)
    }

    fn edge(a: &str, b: &str) -> Edge {
        Edge { from: id(a), to: id(b), weight: 1.0 }
    }

    fn line_graph(n: usize) -> Vec<Edge> {
        (0..n - 1)
            .map(|i| edge(&format!("v{i}"), &format!("v{}", i + 1)))
            .collect()
    }

    #[test]
    fn single_chunk_is_identity_split() {
        let edges = line_graph(6);
        let (plan, chunks) = split_graph(&edges, 1, 0).unwrap();
        assert_eq!(plan.chunk_count(), 1);
        assert_eq!(chunks[0], edges);
        for e in &edges {
            assert_eq!(plan.chunk_weights(e.from).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn chunk_sizes_partition_the_edges() {
        let edges = line_graph(11);
        let (plan, chunks) = split_graph(&edges, 2, 7).unwrap();
        assert_eq!(chunks[0].len() + chunks[1].len(), 10);
        assert!(chunks.iter().all(|c| !c.is_empty()));
        assert_eq!(plan.assignment().len(), 10);
    }

    #[test]
    fn split_is_deterministic() {
        let edges = line_graph(30);
        let (p1, c1) = split_graph(&edges, 4, 123).unwrap();
        let (p2, c2) = split_graph(&edges, 4, 123).unwrap();
        assert_eq!(p1.assignment(), p2.assignment());
        assert_eq!(c1, c2);
        let (p3, _) = split_graph(&edges, 4, 124).unwrap();
        assert_ne!(p1.assignment(), p3.assignment());
    }

    #[test]
    fn too_many_chunks_is_a_config_error() {
        let edges = line_graph(3);
        assert!(split_graph(&edges, 3, 0).is_err());
        assert!(split_graph(&edges, 0, 0).is_err());
    }

    #[test]
    fn weights_follow_endpoint_counts() {
        // v is an endpoint of 2 edges in chunk a and 1 edge in chunk b
        let plan = ChunkPlan {
            chunk_count: 2,
            assignment: vec![0, 0, 1],
            occurrences: vec![
                HashMap::from([(id("v"), 2), (id("x"), 1), (id("y"), 1)]),
                HashMap::from([(id("v"), 1), (id("z"), 1)]),
            ],
            totals: HashMap::from([(id("v"), 3), (id("x"), 1), (id("y"), 1), (id("z"), 1)]),
        };
        let w = plan.chunk_weights(id("v")).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
        // single-chunk node
        assert_eq!(plan.chunk_weights(id("z")).unwrap(), vec![0.0, 1.0]);
        assert!(plan.chunk_weights(id("unknown")).is_err());
    }

    #[test]
    fn weights_sum_to_one_on_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let edges: Vec<Edge> = (0..100)
            .map(|_| {
                edge(
                    &format!("v{}", rng.random_range(0..40)),
                    &format!("v{}", rng.random_range(0..40)),
                )
            })
            .collect();
        let (plan, _) = split_graph(&edges, 7, 99).unwrap();
        let mut nodes: Vec<EntityId> = edges.iter().flat_map(|e| [e.from, e.to]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        for node in nodes {
            let sum: f64 = plan.chunk_weights(node).unwrap().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "weights sum to {sum}");
        }
    }

    #[test]
    fn self_loop_counts_both_endpoints() {
        let edges = vec![edge("a", "a"), edge("a", "b")];
        let (plan, _) = split_graph(&edges, 1, 0).unwrap();
        assert_eq!(plan.total_occurrences(id("a")), Some(3));
        assert_eq!(plan.total_occurrences(id("b")), Some(1));
    }

    #[test]
    fn merge_single_chunk_is_bit_exact() {
        let edges = line_graph(8);
        let (plan, chunk_edges) = split_graph(&edges, 1, 0).unwrap();
        let m = crate::sparsemat::SparseTransition::build(&chunk_edges[0]).unwrap();
        let cfg = crate::embed::EmbedConfig { dim: 12, iterations: 3, seed: 4, keep_penultimate: false };
        let t = crate::embed::embed_pair(&m, &cfg).unwrap().embedding;
        let global = NodeIndex::from_edges(&edges);
        let merged = merge_embeddings(
            &[ChunkEmbedding { index: m.index().clone(), matrix: t.clone() }],
            &plan,
            &global,
        )
        .unwrap();
        assert_eq!(merged.values(), t.values());
    }

    #[test]
    fn merge_applies_node_weights() {
        // node "v" appears in both chunks with weights 2/3 and 1/3
        let ids = |labels: &[&str]| {
            let mut v: Vec<EntityId> = labels.iter().map(|l| id(l)).collect();
            v.sort_unstable();
            v
        };
        let i1 = NodeIndex::from_sorted_ids(ids(&["v", "x", "y"]));
        let i2 = NodeIndex::from_sorted_ids(ids(&["v", "z"]));
        let m1 = EmbeddingMatrix::from_fn(3, 2, |r, j| (r * 2 + j) as f32);
        let m2 = EmbeddingMatrix::from_fn(2, 2, |r, j| (10 + r * 2 + j) as f32);
        let plan = ChunkPlan {
            chunk_count: 2,
            assignment: vec![],
            occurrences: vec![
                HashMap::from([(id("v"), 2), (id("x"), 1), (id("y"), 1)]),
                HashMap::from([(id("v"), 1), (id("z"), 1)]),
            ],
            totals: HashMap::from([(id("v"), 3), (id("x"), 1), (id("y"), 1), (id("z"), 1)]),
        };
        let mut all = ids(&["v", "x", "y", "z"]);
        all.sort_unstable();
        let global = NodeIndex::from_sorted_ids(all);
        let merged = merge_embeddings(
            &[
                ChunkEmbedding { index: i1.clone(), matrix: m1.clone() },
                ChunkEmbedding { index: i2.clone(), matrix: m2.clone() },
            ],
            &plan,
            &global,
        )
        .unwrap();

        let v_global = global.position(id("v")).unwrap() as usize;
        let r1 = m1.row(i1.position(id("v")).unwrap() as usize);
        let r2 = m2.row(i2.position(id("v")).unwrap() as usize);
        for j in 0..2 {
            let want = (2.0 / 3.0) * r1[j] as f64 + (1.0 / 3.0) * r2[j] as f64;
            let got = merged.row(v_global)[j] as f64;
            assert!((got - want).abs() < 1e-12);
        }
        // node absent from chunk 2 keeps its chunk-1 row
        let x_global = global.position(id("x")).unwrap() as usize;
        assert_eq!(
            merged.row(x_global),
            m1.row(i1.position(id("x")).unwrap() as usize)
        );
    }

    #[test]
    fn merged_rows_of_unit_chunks_stay_inside_the_ball() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let edges: Vec<Edge> = (0..60)
            .map(|_| {
                let a = rng.random_range(0..20);
                let b = (a + 1 + rng.random_range(0..19)) % 20;
                edge(&format!("v{a}"), &format!("v{b}"))
            })
            .collect();
        let (plan, chunk_edges) = split_graph(&edges, 3, 1).unwrap();
        let cfg = crate::embed::EmbedConfig { dim: 8, iterations: 2, seed: 0, keep_penultimate: false };
        let chunks: Vec<ChunkEmbedding> = chunk_edges
            .iter()
            .map(|es| {
                let m = crate::sparsemat::SparseTransition::build(es).unwrap();
                let t = crate::embed::embed_pair(&m, &cfg).unwrap().embedding;
                ChunkEmbedding { index: m.index().clone(), matrix: t }
            })
            .collect();
        let global = NodeIndex::from_edges(&edges);
        let merged = merge_embeddings(&chunks, &plan, &global).unwrap();
        for r in 0..merged.rows() {
            let norm: f64 = merged
                .row(r)
                .iter()
                .map(|&x| (x as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(norm <= 1.0 + 1e-6, "row {r} has norm {norm}");
        }
    }
}
