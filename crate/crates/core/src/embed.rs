//! Embedding initialization, the multiply-then-normalize iteration loop, and
//! text output.
//!
//! Initialization is counter-based and keyed by `(seed, entity id, dimension)`
//! rather than drawn from a sequential stream: a node's initial vector does
//! not depend on insertion order or on which chunk of the graph it appears
//! in, which is what makes chunked and whole-graph runs coherent.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CleoraError, Result};
use crate::hashing::EntityId;
use crate::ingest::Dictionary;
use crate::sparsemat::{EmbeddingMatrix, NodeIndex, SparseTransition};

#[derive(Debug, Clone, Copy)]
pub struct EmbedConfig {
    pub dim: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Retain `T_{I-1}` alongside `T_I` for inductive reconstruction.
    pub keep_penultimate: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 1024,
            iterations: 4,
            seed: 0,
            keep_penultimate: false,
        }
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic `U(-1, 1)` draw for entry `(node, dimension)` under `seed`.
#[inline]
pub fn uniform_init(seed: u64, node: EntityId, dimension: usize) -> f32 {
    let z = mix64(mix64(mix64(seed ^ GOLDEN_GAMMA) ^ node.0) ^ dimension as u64);
    // top 24 bits -> [0, 1) without rounding bias in f32
    let unit = (z >> 40) as f32 * (1.0 / (1u64 << 24) as f32);
    2.0 * unit - 1.0
}

/// `T_0 ~ U(-1, 1)`, id-keyed (see module docs).
pub fn init_embedding(index: &NodeIndex, dim: usize, seed: u64) -> EmbeddingMatrix {
    EmbeddingMatrix::from_fn(index.len(), dim, |r, j| {
        uniform_init(seed, index.id_at(r), j)
    })
}

/// Result of the iteration loop for one relation pair.
#[derive(Debug, Clone)]
pub struct Iterates {
    /// `T_I`.
    pub embedding: EmbeddingMatrix,
    /// `T_{I-1}`, present when requested. For `I = 1` this is the raw `T_0`.
    pub penultimate: Option<EmbeddingMatrix>,
    /// Rows that normalized to zero, summed over all iterations.
    pub zero_rows: u64,
}

/// Run `T_i = l2_normalize_rows(M * T_{i-1})` for `cfg.iterations` steps,
/// calling `observe(i, &T_i)` after each one.
pub fn embed_pair_observed(
    transition: &SparseTransition,
    cfg: &EmbedConfig,
    mut observe: impl FnMut(usize, &EmbeddingMatrix),
) -> Result<Iterates> {
    if cfg.dim == 0 {
        return Err(CleoraError::Config("embedding dimension must be >= 1".into()));
    }
    if cfg.iterations == 0 {
        return Err(CleoraError::Config("iteration count must be >= 1".into()));
    }

    let mut current = init_embedding(transition.index(), cfg.dim, cfg.seed);
    let mut penultimate = None;
    let mut zero_rows = 0u64;
    for i in 1..=cfg.iterations {
        if cfg.keep_penultimate && i == cfg.iterations {
            penultimate = Some(current.clone());
        }
        let mut next = transition.multiply(&current)?;
        zero_rows += next.l2_normalize_rows();
        observe(i, &next);
        current = next;
    }
    if zero_rows > 0 {
        log::warn!("{zero_rows} embedding rows normalized to zero");
    }
    Ok(Iterates {
        embedding: current,
        penultimate,
        zero_rows,
    })
}

pub fn embed_pair(transition: &SparseTransition, cfg: &EmbedConfig) -> Result<Iterates> {
    embed_pair_observed(transition, cfg, |_, _| {})
}

fn push_f32(buf: &mut String, x: f32) {
    // 7 significant digits round-trip single precision closely enough for
    // re-parsed rows to stay unit norm, and keep golden files stable.
    write!(buf, "{x:.6e}").unwrap();
}

/// Write `label<TAB>degree<TAB>v1 v2 ... vd` rows. The shared low-level
/// writer behind every embedding-shaped file this crate emits.
pub fn write_embedding_rows<'a>(
    path: &Path,
    rows: impl Iterator<Item = (&'a str, f64, &'a [f32])>,
) -> Result<u64> {
    let file = File::create(path).map_err(|e| CleoraError::io(path, e))?;
    let mut out = BufWriter::with_capacity(1 << 20, file);
    let mut line = String::new();
    let mut written = 0u64;
    for (label, degree, vector) in rows {
        line.clear();
        line.push_str(label);
        line.push('\t');
        write!(line, "{degree}").unwrap();
        line.push('\t');
        for (j, &v) in vector.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            push_f32(&mut line, v);
        }
        line.push('\n');
        out.write_all(line.as_bytes())
            .map_err(|e| CleoraError::io(path, e))?;
        written += 1;
    }
    out.flush().map_err(|e| CleoraError::io(path, e))?;
    Ok(written)
}

/// Write one embedding file in ascending dense-index order. Virtual nodes
/// and ids outside `namespace` are omitted. Returns the row count.
pub fn write_embeddings(
    t: &EmbeddingMatrix,
    index: &NodeIndex,
    degrees: &[f64],
    dict: &Dictionary,
    namespace: &str,
    path: &Path,
) -> Result<u64> {
    let rows = (0..t.rows()).filter_map(|r| {
        let id = index.id_at(r);
        if id.is_virtual() {
            return None;
        }
        let label = dict.label(namespace, id)?;
        Some((label, degrees[r], t.row(r)))
    });
    write_embedding_rows(path, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub label: String,
    pub degree: f64,
    pub vector: Vec<f32>,
}

/// Parse a file produced by [`write_embeddings`].
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let file = File::open(path).map_err(|e| CleoraError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CleoraError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CleoraError::Row {
            path: path.to_path_buf(),
            line: line_no as u64 + 1,
            msg,
        };
        let mut fields = line.split('\t');
        let label = fields
            .next()
            .ok_or_else(|| err("missing label".into()))?
            .to_string();
        let degree: f64 = fields
            .next()
            .ok_or_else(|| err("missing degree".into()))?
            .parse()
            .map_err(|e| err(format!("bad degree: {e}")))?;
        let vector = fields
            .next()
            .ok_or_else(|| err("missing vector".into()))?
            .split(' ')
            .map(|v| v.parse::<f32>().map_err(|e| err(format!("bad value: {e}"))))
            .collect::<Result<Vec<f32>>>()?;
        rows.push(EmbeddingRow {
            label,
            degree,
            vector,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::Edge;

    fn id(label: &str) -> EntityId {
        EntityId::from_label("n", label)
    }

    fn edge(a: &str, b: &str) -> Edge {
        Edge { from: id(a), to: id(b), weight: 1.0 }
    }

    #[test]
    fn init_values_are_in_range() {
        let index = NodeIndex::from_edges(&[edge("a", "b"), edge("b", "c")]);
        let t = init_embedding(&index, 64, 42);
        assert!(t.values().iter().all(|&x| (-1.0..1.0).contains(&x)));
    }

    #[test]
    fn init_is_keyed_not_ordered() {
        assert_eq!(uniform_init(1, id("a"), 3), uniform_init(1, id("a"), 3));
        assert_ne!(uniform_init(1, id("a"), 3), uniform_init(2, id("a"), 3));
        assert_ne!(uniform_init(1, id("a"), 3), uniform_init(1, id("b"), 3));
        assert_ne!(uniform_init(1, id("a"), 3), uniform_init(1, id("a"), 4));
    }

    #[test]
    fn high_dimensional_rows_are_centered_and_orthogonal() {
        let d = 1024;
        let a: Vec<f64> = (0..d).map(|j| uniform_init(7, id("x"), j) as f64).collect();
        let b: Vec<f64> = (0..d).map(|j| uniform_init(7, id("y"), j) as f64).collect();
        let mean = a.iter().sum::<f64>() / d as f64;
        assert!(mean.abs() < 0.1, "mean {mean}");
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = dot / (na * nb);
        assert!(cos.abs() < 0.15, "cosine {cos}");
    }

    #[test]
    fn renaming_a_node_leaves_other_init_rows_alone() {
        let edges_one = [edge("a", "b"), edge("b", "c")];
        let renamed = [
            Edge { from: id("a"), to: id("zz"), weight: 1.0 },
            Edge { from: id("zz"), to: id("c"), weight: 1.0 },
        ];
        let i1 = NodeIndex::from_edges(&edges_one);
        let i2 = NodeIndex::from_edges(&renamed);
        let t1 = init_embedding(&i1, 16, 9);
        let t2 = init_embedding(&i2, 16, 9);
        for label in ["a", "c"] {
            let r1 = i1.position(id(label)).unwrap() as usize;
            let r2 = i2.position(id(label)).unwrap() as usize;
            assert_eq!(t1.row(r1), t2.row(r2), "row for {label} changed");
        }
    }

    #[test]
    fn one_iteration_on_two_nodes_swaps_and_normalizes() {
        let m = SparseTransition::build(&[edge("a", "b")]).unwrap();
        let cfg = EmbedConfig { dim: 8, iterations: 1, seed: 3, keep_penultimate: true };
        let out = embed_pair(&m, &cfg).unwrap();
        let t0 = out.penultimate.unwrap();
        let a = m.index().position(id("a")).unwrap() as usize;
        let b = m.index().position(id("b")).unwrap() as usize;

        let mut expected = t0.row(b).to_vec();
        let norm = expected.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        for x in &mut expected {
            *x = (*x as f64 / norm) as f32;
        }
        for (got, want) in out.embedding.row(a).iter().zip(&expected) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn long_runs_collapse_on_connected_non_bipartite_graphs() {
        // wheel graph: hub 0 plus a 19-cycle, triangles everywhere
        let n = 20usize;
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push(edge("hub", &format!("v{i}")));
            let next = if i == n - 1 { 1 } else { i + 1 };
            edges.push(edge(&format!("v{i}"), &format!("v{next}")));
        }
        let m = SparseTransition::build(&edges).unwrap();
        let cfg = EmbedConfig { dim: 16, iterations: 64, seed: 11, keep_penultimate: false };
        let t = embed_pair(&m, &cfg).unwrap().embedding;

        let mut total = 0.0f64;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                let dot: f64 = t
                    .row(i)
                    .iter()
                    .zip(t.row(j))
                    .map(|(&x, &y)| x as f64 * y as f64)
                    .sum();
                total += dot;
                pairs += 1;
            }
        }
        let mean_cos = total / pairs as f64;
        assert!(mean_cos >= 0.99, "mean pairwise cosine {mean_cos}");
    }

    #[test]
    fn write_and_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        let mut dict = Dictionary::new();
        for label in ["a", "b", "c"] {
            dict.intern("n", label).unwrap();
        }
        let m = SparseTransition::build(&[edge("a", "b"), edge("b", "c")]).unwrap();
        let cfg = EmbedConfig { dim: 2, iterations: 2, seed: 0, keep_penultimate: false };
        let out = embed_pair(&m, &cfg).unwrap();
        let written =
            write_embeddings(&out.embedding, m.index(), m.degrees(), &dict, "n", &path).unwrap();
        assert_eq!(written, 3);

        let rows = read_embeddings(&path).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert_eq!(row.vector.len(), 2);
            let norm: f64 = row.vector.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-4, "re-parsed norm {norm}");
            let stored = m.index().position(id(&row.label)).unwrap() as usize;
            for (a, b) in row.vector.iter().zip(out.embedding.row(stored)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        // rows come out in ascending dense-index order
        let order: Vec<u32> = rows
            .iter()
            .map(|r| m.index().position(id(&r.label)).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn virtual_nodes_are_not_written() {
        use crate::expansion::{star_expand_into, VirtualNodeSource};
        use crate::ingest::Hyperedge;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        let mut dict = Dictionary::new();
        let mut edges = Vec::new();
        let mut source = VirtualNodeSource::new();
        for i in 0..10 {
            let a = dict.intern("n", &format!("a{i}")).unwrap();
            let b = dict.intern("n", &format!("b{i}")).unwrap();
            star_expand_into(
                &Hyperedge { groups: vec![vec![a, b]], weight: 1.0 },
                &mut source,
                &mut edges,
            );
        }
        let m = SparseTransition::build(&edges).unwrap();
        let cfg = EmbedConfig { dim: 4, iterations: 2, seed: 0, keep_penultimate: false };
        let out = embed_pair(&m, &cfg).unwrap();
        let written =
            write_embeddings(&out.embedding, m.index(), m.degrees(), &dict, "n", &path).unwrap();
        assert_eq!(written, 20);
        let rows = read_embeddings(&path).unwrap();
        assert!(rows.iter().all(|r| !r.label.starts_with("virtual")));
    }
}
