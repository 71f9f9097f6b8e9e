//! COO sparse random-walk transition matrix and the dense embedding matrix.
//!
//! `SparseTransition` stores row-normalized entries `e_ab / deg(a)` where
//! `e_ab` is the summed weight of all a-b edges and `deg(a)` the total weight
//! incident to `a`. Entries are sorted by `(row, col)` and every multiply
//! accumulates a row's contributions left-to-right in `f64`, so results are
//! identical for any worker count and from run to run.
//!
//! Embeddings are stored in single precision (4-byte values); all reductions
//! over a row run in double precision to limit cancellation error.

use rayon::prelude::*;
use std::collections::HashMap;

use crate::error::{CleoraError, Result};
use crate::expansion::Edge;
use crate::hashing::EntityId;

/// Bijection between entity ids and dense indices `0..|V|`, ordered by
/// ascending id so it is independent of edge order.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    ids: Vec<EntityId>,
    positions: HashMap<EntityId, u32>,
}

impl NodeIndex {
    pub fn from_edges(edges: &[Edge]) -> NodeIndex {
        let mut ids: Vec<EntityId> = edges
            .iter()
            .flat_map(|e| [e.from, e.to])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        NodeIndex::from_sorted_ids(ids)
    }

    pub fn from_sorted_ids(ids: Vec<EntityId>) -> NodeIndex {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let positions = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i as u32))
            .collect();
        NodeIndex { ids, positions }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: EntityId) -> Option<u32> {
        self.positions.get(&id).copied()
    }

    pub fn id_at(&self, position: usize) -> EntityId {
        self.ids[position]
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.ids
    }
}

/// `|V| x d` single-precision embedding matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> EmbeddingMatrix {
        EmbeddingMatrix {
            rows,
            dim,
            values: vec![0.0; rows * dim],
        }
    }

    /// Build a matrix by evaluating `f(row, col)`; rows are filled in parallel.
    pub fn from_fn(rows: usize, dim: usize, f: impl Fn(usize, usize) -> f32 + Sync) -> Self {
        let mut m = EmbeddingMatrix::zeros(rows, dim);
        m.values
            .par_chunks_mut(dim.max(1))
            .enumerate()
            .for_each(|(r, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f(r, j);
                }
            });
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Scale every row to unit L2 norm. Rows with norm below `1e-12` are
    /// zeroed out; the returned count is a warning statistic.
    pub fn l2_normalize_rows(&mut self) -> u64 {
        let dim = self.dim.max(1);
        self.values
            .par_chunks_mut(dim)
            .map(|row| {
                let norm = row
                    .iter()
                    .map(|&x| {
                        let x = x as f64;
                        x * x
                    })
                    .sum::<f64>()
                    .sqrt();
                if norm < 1e-12 {
                    row.fill(0.0);
                    1u64
                } else {
                    for x in row.iter_mut() {
                        *x = (*x as f64 / norm) as f32;
                    }
                    0
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CooEntry {
    pub row: u32,
    pub col: u32,
    pub value: f32,
}

/// Row-stochastic random-walk transition matrix in COO form.
#[derive(Debug, Clone)]
pub struct SparseTransition {
    index: NodeIndex,
    entries: Vec<CooEntry>,
    row_offsets: Vec<usize>,
    degree: Vec<f64>,
}

impl SparseTransition {
    /// Build the transition matrix from an undirected edge list. Duplicate
    /// `(a, b)` edges are coalesced by weight summation before the division
    /// by degree; both directions of every edge are materialized.
    pub fn build(edges: &[Edge]) -> Result<SparseTransition> {
        if edges.is_empty() {
            return Err(CleoraError::Config(
                "cannot build a transition matrix from an empty edge list".into(),
            ));
        }
        let index = NodeIndex::from_edges(edges);
        SparseTransition::build_with_index(edges, index)
    }

    pub fn build_with_index(edges: &[Edge], index: NodeIndex) -> Result<SparseTransition> {
        let n = index.len();
        let mut directed: Vec<(u32, u32, f32)> = Vec::with_capacity(edges.len() * 2);
        for e in edges {
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(CleoraError::Internal(format!(
                    "edge weight must be positive and finite, got {}",
                    e.weight
                )));
            }
            let (Some(a), Some(b)) = (index.position(e.from), index.position(e.to)) else {
                return Err(CleoraError::Internal(
                    "edge endpoint missing from node index".into(),
                ));
            };
            directed.push((a, b, e.weight));
            if a != b {
                directed.push((b, a, e.weight));
            }
        }
        // Stable sort keeps duplicates in input order, so the coalescing sums
        // below are reproducible.
        directed.sort_by_key(|&(r, c, _)| (r, c));

        let mut entries: Vec<CooEntry> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for (r, c, w) in directed {
            match entries.last() {
                Some(last) if last.row == r && last.col == c => {
                    *sums.last_mut().unwrap() += w as f64;
                }
                _ => {
                    entries.push(CooEntry { row: r, col: c, value: 0.0 });
                    sums.push(w as f64);
                }
            }
        }

        let mut degree = vec![0.0f64; n];
        for (entry, &sum) in entries.iter().zip(&sums) {
            degree[entry.row as usize] += sum;
        }
        for (entry, &sum) in entries.iter_mut().zip(&sums) {
            entry.value = (sum / degree[entry.row as usize]) as f32;
        }

        let mut row_offsets = vec![0usize; n + 1];
        for e in &entries {
            row_offsets[e.row as usize + 1] += 1;
        }
        for r in 0..n {
            row_offsets[r + 1] += row_offsets[r];
        }

        Ok(SparseTransition {
            index,
            entries,
            row_offsets,
            degree,
        })
    }

    pub fn index(&self) -> &NodeIndex {
        &self.index
    }

    pub fn node_count(&self) -> usize {
        self.index.len()
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[CooEntry] {
        &self.entries
    }

    /// Summed incident edge weight per node (both directions counted).
    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    /// The `(column, value)` support of one row, in ascending column order.
    pub fn row_entries(&self, row: usize) -> &[CooEntry] {
        &self.entries[self.row_offsets[row]..self.row_offsets[row + 1]]
    }

    /// The coalesced undirected edge list as `(id, id)` pairs with `from <= to`.
    pub fn undirected_pairs(&self) -> Vec<(EntityId, EntityId)> {
        self.entries
            .iter()
            .filter(|e| e.row <= e.col)
            .map(|e| (self.index.id_at(e.row as usize), self.index.id_at(e.col as usize)))
            .collect()
    }

    /// Sparse-dense product `M * T`. Each output row is accumulated in `f64`
    /// over that row's entries in sorted order, so the result is
    /// bit-reproducible regardless of the number of workers.
    pub fn multiply(&self, t: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if t.rows() != self.node_count() {
            return Err(CleoraError::Internal(format!(
                "dimension mismatch: transition is {n}x{n} but embedding has {r} rows",
                n = self.node_count(),
                r = t.rows()
            )));
        }
        let dim = t.dim();
        let mut out = EmbeddingMatrix::zeros(self.node_count(), dim);
        let entries = &self.entries;
        let offsets = &self.row_offsets;
        out.values
            .par_chunks_mut(dim.max(1))
            .enumerate()
            .for_each_init(
                || vec![0.0f64; dim],
                |acc, (r, out_row)| {
                    acc.fill(0.0);
                    for e in &entries[offsets[r]..offsets[r + 1]] {
                        let src = t.row(e.col as usize);
                        let v = e.value as f64;
                        for (a, &x) in acc.iter_mut().zip(src) {
                            *a += v * x as f64;
                        }
                    }
                    for (o, &a) in out_row.iter_mut().zip(acc.iter()) {
                        *o = a as f32;
                    }
                },
            );
        Ok(out)
    }
}
