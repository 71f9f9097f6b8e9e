//! Hypergraph expansion: breaking hyperedges into pairwise edges.
//!
//! Two strategies exist. Clique expansion connects every cross pair of the
//! two columns of a relation pair (and every unordered pair within a
//! reflexive column), producing up to `k^2` edges per hyperedge of width `k`.
//! Star expansion introduces one fresh virtual node per hyperedge and links
//! it to every member, producing exactly `k` edges; the expanded graph is
//! bipartite between virtual and original nodes.

use serde::{Deserialize, Serialize};

use crate::error::{CleoraError, Result};
use crate::hashing::EntityId;
use crate::ingest::{ColumnSchema, Hyperedge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    Clique,
    Star,
}

impl std::fmt::Display for Expansion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expansion::Clique => write!(f, "clique"),
            Expansion::Star => write!(f, "star"),
        }
    }
}

impl std::str::FromStr for Expansion {
    type Err = CleoraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clique" => Ok(Expansion::Clique),
            "star" => Ok(Expansion::Star),
            other => Err(CleoraError::Config(format!(
                "unknown expansion {other:?} (expected clique or star)"
            ))),
        }
    }
}

/// A pair of non-ignored columns that gets its own embedding matrix.
/// Indices address the schema's active columns; `left == right` marks the
/// self pair of a reflexive column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationPair {
    pub left: usize,
    pub right: usize,
}

impl RelationPair {
    pub fn is_reflexive(&self) -> bool {
        self.left == self.right
    }

    pub fn names<'a>(&self, schema: &'a ColumnSchema) -> (&'a str, &'a str) {
        (
            schema.active_spec(self.left).name.as_str(),
            schema.active_spec(self.right).name.as_str(),
        )
    }
}

/// An undirected edge between two entities. Both directions are materialized
/// later, when the transition matrix is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: EntityId,
    pub to: EntityId,
    pub weight: f32,
}

/// Enumerate the relation pairs of a schema: every `(i, j)` with `i < j` over
/// non-ignored columns, plus `(i, i)` for each reflexive column, in schema
/// order.
pub fn relation_pairs(schema: &ColumnSchema) -> Vec<RelationPair> {
    let n = schema.active_count();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i..n {
            if i == j {
                if schema.active_spec(i).reflexive {
                    pairs.push(RelationPair { left: i, right: i });
                }
            } else {
                pairs.push(RelationPair { left: i, right: j });
            }
        }
    }
    pairs
}

/// Clique-expand one hyperedge for one relation pair, appending to `out`.
///
/// Cross pairs connect every member of the left group with every member of
/// the right group; self pairs connect every unordered pair within the group.
/// Self-loops appear only when a reflexive group holds a duplicated entity.
pub fn clique_expand_into(h: &Hyperedge, pair: RelationPair, out: &mut Vec<Edge>) {
    if pair.is_reflexive() {
        let group = &h.groups[pair.left];
        for s in 0..group.len() {
            for t in (s + 1)..group.len() {
                out.push(Edge {
                    from: group[s],
                    to: group[t],
                    weight: h.weight,
                });
            }
        }
    } else {
        for &a in &h.groups[pair.left] {
            for &b in &h.groups[pair.right] {
                if a != b {
                    out.push(Edge {
                        from: a,
                        to: b,
                        weight: h.weight,
                    });
                }
            }
        }
    }
}

pub fn clique_expand(h: &Hyperedge, pair: RelationPair) -> Vec<Edge> {
    let mut out = Vec::new();
    clique_expand_into(h, pair, &mut out);
    out
}

/// Monotone counter handing out virtual-node ids from the reserved namespace.
#[derive(Debug, Default)]
pub struct VirtualNodeSource {
    next: u64,
}

impl VirtualNodeSource {
    pub fn new() -> Self {
        VirtualNodeSource::default()
    }

    pub fn issued(&self) -> u64 {
        self.next
    }

    fn issue(&mut self) -> EntityId {
        let id = EntityId::virtual_node(self.next);
        self.next += 1;
        id
    }
}

/// Star-expand one hyperedge: a fresh virtual node linked to every member of
/// every group. Emits exactly `h.width()` edges.
pub fn star_expand_into(
    h: &Hyperedge,
    source: &mut VirtualNodeSource,
    out: &mut Vec<Edge>,
) -> EntityId {
    let hub = source.issue();
    for group in &h.groups {
        for &member in group {
            out.push(Edge {
                from: hub,
                to: member,
                weight: h.weight,
            });
        }
    }
    hub
}

pub fn star_expand(h: &Hyperedge, source: &mut VirtualNodeSource) -> (EntityId, Vec<Edge>) {
    let mut out = Vec::new();
    let hub = star_expand_into(h, source, &mut out);
    (hub, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ColumnSchema;

    fn id(ns: &str, label: &str) -> EntityId {
        EntityId::from_label(ns, label)
    }

    fn pair_names(schema: &ColumnSchema) -> Vec<(String, String)> {
        relation_pairs(schema)
            .iter()
            .map(|p| {
                let (l, r) = p.names(schema);
                (l.to_string(), r.to_string())
            })
            .collect()
    }

    #[test]
    fn single_pair() {
        let schema = ColumnSchema::parse("a b").unwrap();
        assert_eq!(pair_names(&schema), vec![("a".into(), "b".into())]);
    }

    #[test]
    fn three_columns_cartesian() {
        let schema = ColumnSchema::parse("a b c").unwrap();
        assert_eq!(
            pair_names(&schema),
            vec![
                ("a".into(), "b".into()),
                ("a".into(), "c".into()),
                ("b".into(), "c".into()),
            ]
        );
    }

    #[test]
    fn reflexive_contributes_self_pair() {
        let schema = ColumnSchema::parse("transient::t complex::reflexive::p").unwrap();
        assert_eq!(
            pair_names(&schema),
            vec![("t".into(), "p".into()), ("p".into(), "p".into())]
        );
    }

    #[test]
    fn clique_cross_pair() {
        let h = Hyperedge {
            groups: vec![vec![id("a", "x")], vec![id("b", "y"), id("b", "z")]],
            weight: 1.0,
        };
        let edges = clique_expand(&h, RelationPair { left: 0, right: 1 });
        assert_eq!(
            edges,
            vec![
                Edge { from: id("a", "x"), to: id("b", "y"), weight: 1.0 },
                Edge { from: id("a", "x"), to: id("b", "z"), weight: 1.0 },
            ]
        );
    }

    #[test]
    fn clique_self_pair_skips_self_loops() {
        let h = Hyperedge {
            groups: vec![vec![id("p", "u"), id("p", "v"), id("p", "w")]],
            weight: 1.0,
        };
        let edges = clique_expand(&h, RelationPair { left: 0, right: 0 });
        // k(k-1)/2 = 3 unordered pairs for k = 3
        assert_eq!(edges.len(), 3);
        assert!(edges.iter().all(|e| e.from != e.to));
    }

    #[test]
    fn clique_duplicated_entity_emits_self_loop() {
        let h = Hyperedge {
            groups: vec![vec![id("p", "u"), id("p", "u")]],
            weight: 1.0,
        };
        let edges = clique_expand(&h, RelationPair { left: 0, right: 0 });
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].from, edges[0].to);
    }

    #[test]
    fn clique_width_two_is_identity() {
        let h = Hyperedge {
            groups: vec![vec![id("p", "u"), id("p", "v")]],
            weight: 2.0,
        };
        let edges = clique_expand(&h, RelationPair { left: 0, right: 0 });
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].from, edges[0].to), (id("p", "u"), id("p", "v")));
    }

    #[test]
    fn clique_self_pair_edge_count_is_below_width_squared() {
        for k in 1..8usize {
            let group: Vec<EntityId> = (0..k).map(|i| id("p", &format!("n{i}"))).collect();
            let h = Hyperedge { groups: vec![group], weight: 1.0 };
            let edges = clique_expand(&h, RelationPair { left: 0, right: 0 });
            assert_eq!(edges.len(), k * (k - 1) / 2);
            assert!(edges.len() <= k * k);
        }
    }

    #[test]
    fn cross_pair_edge_count_is_group_product() {
        let h = Hyperedge {
            groups: vec![
                (0..3).map(|i| id("a", &format!("a{i}"))).collect(),
                (0..4).map(|i| id("b", &format!("b{i}"))).collect(),
            ],
            weight: 1.0,
        };
        let edges = clique_expand(&h, RelationPair { left: 0, right: 1 });
        assert_eq!(edges.len(), 12);
    }

    #[test]
    fn star_links_every_member() {
        let h = Hyperedge {
            groups: vec![vec![id("c", "c1")], vec![id("p", "p1")], vec![id("s", "s1")]],
            weight: 1.0,
        };
        let mut source = VirtualNodeSource::new();
        let (hub, edges) = star_expand(&h, &mut source);
        assert!(hub.is_virtual());
        assert_eq!(edges.len(), 3);
        assert!(edges.iter().all(|e| e.from == hub && !e.to.is_virtual()));
    }

    #[test]
    fn star_width_one() {
        let h = Hyperedge {
            groups: vec![vec![id("a", "x")]],
            weight: 1.0,
        };
        let mut source = VirtualNodeSource::new();
        let (hub, edges) = star_expand(&h, &mut source);
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].from, hub);
    }

    #[test]
    fn star_counts_over_many_hyperedges() {
        let mut source = VirtualNodeSource::new();
        let mut edges = Vec::new();
        let mut hubs = std::collections::HashSet::new();
        for i in 0..1000 {
            let h = Hyperedge {
                groups: vec![
                    vec![id("a", &format!("a{i}")), id("a", &format!("b{i}"))],
                    vec![id("c", &format!("c{i}")), id("c", &format!("d{i}"))],
                ],
                weight: 1.0,
            };
            hubs.insert(star_expand_into(&h, &mut source, &mut edges));
        }
        assert_eq!(hubs.len(), 1000);
        assert_eq!(source.issued(), 1000);
        assert_eq!(edges.len(), 4000);
        // bipartite: no edge connects two original nodes
        assert!(edges.iter().all(|e| e.from.is_virtual() ^ e.to.is_virtual()));
    }
}
