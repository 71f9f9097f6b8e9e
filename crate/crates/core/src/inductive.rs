//! Inductive embedding of nodes unseen at training time.
//!
//! A new node's vector is the L2-normalized, degree-weighted average of its
//! neighbors' stored representations — exactly the transition-row multiply
//! the training loop would have performed. The source matrix should be
//! `T_{I-1}`: reconstructing a *training* node from `T_{I-1}` then reproduces
//! its `T_I` row, which is the consistency oracle for this module.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::error::{CleoraError, Result};
use crate::expansion::Edge;
use crate::hashing::EntityId;
use crate::sparsemat::{EmbeddingMatrix, NodeIndex};

/// Read-only lookup of stored node vectors.
pub trait VectorSource: Sync {
    fn dim(&self) -> usize;
    fn get(&self, id: EntityId) -> Option<&[f32]>;
}

/// A matrix plus its node index.
pub struct MatrixSource<'a> {
    pub index: &'a NodeIndex,
    pub matrix: &'a EmbeddingMatrix,
}

impl VectorSource for MatrixSource<'_> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn get(&self, id: EntityId) -> Option<&[f32]> {
        self.index
            .position(id)
            .map(|p| self.matrix.row(p as usize))
    }
}

/// Vectors loaded from embedding files.
pub struct MapSource {
    dim: usize,
    vectors: HashMap<EntityId, Vec<f32>>,
}

impl MapSource {
    pub fn new(dim: usize) -> MapSource {
        MapSource {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: EntityId, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(CleoraError::Internal(format!(
                "vector for {id} has {} dimensions, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.vectors.contains_key(&id)
    }
}

impl VectorSource for MapSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn get(&self, id: EntityId) -> Option<&[f32]> {
        self.vectors.get(&id).map(|v| v.as_slice())
    }
}

struct UnionSource<'a, S: VectorSource> {
    base: &'a S,
    extra: &'a HashMap<EntityId, Vec<f32>>,
}

impl<S: VectorSource> VectorSource for UnionSource<'_, S> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn get(&self, id: EntityId) -> Option<&[f32]> {
        self.base
            .get(id)
            .or_else(|| self.extra.get(&id).map(|v| v.as_slice()))
    }
}

/// Weighted-average reconstruction of one node from `(neighbor, edge weight)`
/// pairs. Mirrors the training step: neighbors are coalesced and accumulated
/// in ascending-id order with the same single-precision transition weights,
/// then the row is normalized the way the iteration loop normalizes.
pub fn reconstruct_node(
    neighbors: &[(EntityId, f32)],
    source: &impl VectorSource,
) -> Result<Vec<f32>> {
    if neighbors.is_empty() {
        return Err(CleoraError::Reconstruct(
            "node has no neighbors to average".into(),
        ));
    }
    let mut coalesced: Vec<(EntityId, f64)> = Vec::with_capacity(neighbors.len());
    let mut sorted = neighbors.to_vec();
    sorted.sort_by_key(|&(id, _)| id);
    for (id, w) in sorted {
        match coalesced.last_mut() {
            Some((last, sum)) if *last == id => *sum += w as f64,
            _ => coalesced.push((id, w as f64)),
        }
    }

    let missing: Vec<EntityId> = coalesced
        .iter()
        .map(|&(id, _)| id)
        .filter(|&id| source.get(id).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(CleoraError::Reconstruct(format!(
            "{} neighbor(s) missing from the stored embedding: {}",
            missing.len(),
            missing
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    let degree: f64 = coalesced.iter().map(|&(_, w)| w).sum();
    let dim = source.dim();
    let mut acc = vec![0.0f64; dim];
    for &(id, w) in &coalesced {
        let value = (w / degree) as f32;
        let row = source.get(id).unwrap();
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += value as f64 * x as f64;
        }
    }
    // same two-step rounding as multiply + l2_normalize_rows
    let mut row: Vec<f32> = acc.into_iter().map(|x| x as f32).collect();
    let norm = row
        .iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt();
    if norm < 1e-12 {
        row.fill(0.0);
    } else {
        for x in row.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hops {
    One,
    Two,
}

impl Hops {
    pub fn from_count(n: u8) -> Result<Hops> {
        match n {
            1 => Ok(Hops::One),
            2 => Ok(Hops::Two),
            other => Err(CleoraError::Config(format!(
                "hops must be 1 or 2, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstructed {
    pub id: EntityId,
    /// 1 if computed from stored vectors, 2 if computed from hop-1 results.
    pub hop: u8,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    pub embedded: Vec<Reconstructed>,
    /// New nodes unreachable within the hop budget, ascending.
    pub unembedded: Vec<EntityId>,
}

/// Reconstruct every node of `new_edges` that is absent from `source`.
///
/// Hop levels are strict: all hop-1 nodes (those with at least one stored
/// neighbor) are computed first from `source` alone; hop-2 nodes are then
/// computed from the union of `source` and the hop-1 results. Nodes
/// unreachable within the budget are reported, not fatal.
pub fn reconstruct_batch(
    new_edges: &[Edge],
    source: &impl VectorSource,
    hops: Hops,
) -> Result<BatchOutcome> {
    let mut adjacency: HashMap<EntityId, Vec<(EntityId, f32)>> = HashMap::new();
    for e in new_edges {
        adjacency.entry(e.from).or_default().push((e.to, e.weight));
        if e.from != e.to {
            adjacency.entry(e.to).or_default().push((e.from, e.weight));
        }
    }

    let mut pending: Vec<EntityId> = adjacency
        .keys()
        .copied()
        .filter(|&id| source.get(id).is_none())
        .collect();
    pending.sort_unstable();

    let mut outcome = BatchOutcome::default();
    let mut resolved: HashMap<EntityId, Vec<f32>> = HashMap::new();

    let levels: u8 = match hops {
        Hops::One => 1,
        Hops::Two => 2,
    };
    for hop in 1..=levels {
        let known: HashSet<EntityId> = resolved.keys().copied().collect();
        let union = UnionSource {
            base: source,
            extra: &resolved,
        };
        let (ready, rest): (Vec<EntityId>, Vec<EntityId>) =
            pending.iter().copied().partition(|&id| {
                adjacency[&id]
                    .iter()
                    .any(|&(n, _)| source.get(n).is_some() || known.contains(&n))
            });
        let batch: Vec<Reconstructed> = ready
            .par_iter()
            .map(|&id| {
                let usable: Vec<(EntityId, f32)> = adjacency[&id]
                    .iter()
                    .copied()
                    .filter(|&(n, _)| union.get(n).is_some())
                    .collect();
                reconstruct_node(&usable, &union).map(|vector| Reconstructed { id, hop, vector })
            })
            .collect::<Result<Vec<_>>>()?;
        for r in &batch {
            resolved.insert(r.id, r.vector.clone());
        }
        outcome.embedded.extend(batch);
        pending = rest;
        if pending.is_empty() {
            break;
        }
    }
    outcome.unembedded = pending;
    Ok(outcome)
}
