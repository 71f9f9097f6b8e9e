//! Hypergraph node embeddings by iterated, L2-normalized weighted averaging
//! of neighbor representations.
//!
//! The engine ingests relational rows (TSV or JSON lines), expands hyperedges
//! into pairwise edges (clique or star), builds a row-stochastic random-walk
//! transition matrix per relation pair, and repeatedly multiplies and
//! row-normalizes a single-precision embedding matrix. On top of that sit
//! chunked embedding with weighted merging, inductive embedding of unseen
//! nodes, and a self-contained evaluation harness for link prediction and
//! node classification.
//!
//! Determinism is a hard contract throughout: fixed inputs and seed produce
//! byte-identical outputs for any worker count.

pub mod chunks;
pub mod embed;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod gen;
pub mod hashing;
pub mod inductive;
pub mod ingest;
pub mod manifest;
pub mod memory;
pub mod model;
pub mod pipeline;
pub mod sparsemat;

pub use embed::{EmbedConfig, EmbeddingRow};
pub use error::{CleoraError, Result};
pub use expansion::{Edge, Expansion, RelationPair};
pub use hashing::EntityId;
pub use ingest::{ColumnSchema, Dictionary, Hyperedge, InputFormat};
pub use manifest::RunManifest;
pub use memory::MemoryModel;
pub use pipeline::PipelineConfig;
pub use sparsemat::{EmbeddingMatrix, NodeIndex, SparseTransition};
