//! End-to-end orchestration: ingest -> expand -> transition -> embed ->
//! (chunk merge) -> files, plus the iteration sweep.
//!
//! Everything here is a library entry point so the CLI stays a thin argument
//! layer and tests can drive whole runs in memory. Output is deterministic
//! for a fixed config: identical bytes for any worker count and across
//! repeated runs.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use crate::chunks::{merge_embeddings, split_graph, ChunkEmbedding, ChunkPlan};
use crate::embed::{embed_pair_observed, write_embeddings, EmbedConfig};
use crate::error::{CleoraError, Result};
use crate::eval::{
    evaluate_link_prediction, popular_negatives, train_link_predictor, SgdConfig,
};
use crate::expansion::{
    clique_expand_into, relation_pairs, star_expand_into, Edge, Expansion, VirtualNodeSource,
};
use crate::hashing::EntityId;
use crate::inductive::MatrixSource;
use crate::ingest::{
    read_hyperedges, ColumnSchema, Dictionary, Hyperedge, IngestOptions, IngestStats, InputFormat,
};
use crate::manifest::{
    file_sha256, now_unix_ms, InputManifest, PairManifest, RunManifest,
};
use crate::memory::MemoryModel;
use crate::sparsemat::{EmbeddingMatrix, NodeIndex, SparseTransition};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub schema: String,
    pub weighted: bool,
    pub strict: bool,
    pub expansion: Expansion,
    pub embed: EmbedConfig,
    pub chunks: usize,
    pub normalize_merged: bool,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, schema: impl Into<String>) -> PipelineConfig {
        PipelineConfig {
            input: input.into(),
            format: InputFormat::Tsv,
            schema: schema.into(),
            weighted: false,
            strict: false,
            expansion: Expansion::Clique,
            embed: EmbedConfig::default(),
            chunks: 1,
            normalize_merged: false,
            output_dir: PathBuf::from("."),
        }
    }

    /// Rebuild the config recorded in a manifest (for replaying a run).
    pub fn from_manifest(manifest: &RunManifest, output_dir: impl Into<PathBuf>) -> PipelineConfig {
        PipelineConfig {
            input: manifest.input.path.clone(),
            format: manifest.input.format,
            schema: manifest.schema.clone(),
            weighted: manifest.weighted,
            strict: manifest.strict,
            expansion: manifest.expansion,
            embed: EmbedConfig {
                dim: manifest.dim,
                iterations: manifest.iterations,
                seed: manifest.seed,
                keep_penultimate: manifest.keep_penultimate,
            },
            chunks: manifest.chunks,
            normalize_merged: manifest.normalize_merged,
            output_dir: output_dir.into(),
        }
    }
}

/// One expanded graph: a relation pair under clique expansion, or the whole
/// star-expanded hypergraph (named `star`/`all`).
#[derive(Debug, Clone)]
pub struct PairGraph {
    pub left: String,
    pub right: String,
    /// Non-transient columns whose entities get an output file.
    pub output_columns: Vec<String>,
    pub edges: Vec<Edge>,
    pub virtual_nodes: u64,
}

impl PairGraph {
    pub fn tag(&self) -> String {
        format!("{}~{}", self.left, self.right)
    }
}

#[derive(Debug)]
pub struct BuiltGraphs {
    pub schema: ColumnSchema,
    pub dict: Dictionary,
    pub graphs: Vec<PairGraph>,
    pub stats: IngestStats,
}

/// Ingest the input file and expand it into per-pair edge lists (clique) or
/// one star graph.
pub fn build_graphs(cfg: &PipelineConfig) -> Result<BuiltGraphs> {
    let schema = ColumnSchema::parse(&cfg.schema)?;
    let mut dict = Dictionary::new();
    let opts = IngestOptions {
        format: cfg.format,
        weighted: cfg.weighted,
        strict: cfg.strict,
    };
    let (hyperedges, stats) = read_hyperedges(&cfg.input, &schema, opts, &mut dict)?;
    if stats.rows_skipped > 0 {
        log::warn!("{} malformed rows skipped", stats.rows_skipped);
    }
    if hyperedges.is_empty() {
        return Err(CleoraError::Config(format!(
            "input {} contains no usable rows",
            cfg.input.display()
        )));
    }

    let graphs = expand_all(&schema, &hyperedges, cfg.expansion);
    if graphs.is_empty() {
        return Err(CleoraError::Config(
            "expansion produced no edges for any relation pair".into(),
        ));
    }
    Ok(BuiltGraphs {
        schema,
        dict,
        graphs,
        stats,
    })
}

pub fn expand_all(
    schema: &ColumnSchema,
    hyperedges: &[Hyperedge],
    expansion: Expansion,
) -> Vec<PairGraph> {
    match expansion {
        Expansion::Clique => relation_pairs(schema)
            .into_iter()
            .filter_map(|pair| {
                let mut edges = Vec::new();
                for h in hyperedges {
                    clique_expand_into(h, pair, &mut edges);
                }
                let (left, right) = pair.names(schema);
                if edges.is_empty() {
                    log::warn!("relation pair {left}~{right} produced no edges; skipping");
                    return None;
                }
                let mut output_columns = vec![];
                for spec in [schema.active_spec(pair.left), schema.active_spec(pair.right)] {
                    if !spec.transient && !output_columns.contains(&spec.name) {
                        output_columns.push(spec.name.clone());
                    }
                }
                Some(PairGraph {
                    left: left.to_string(),
                    right: right.to_string(),
                    output_columns,
                    edges,
                    virtual_nodes: 0,
                })
            })
            .collect(),
        Expansion::Star => {
            let mut source = VirtualNodeSource::new();
            let mut edges = Vec::new();
            for h in hyperedges {
                star_expand_into(h, &mut source, &mut edges);
            }
            if edges.is_empty() {
                return vec![];
            }
            let output_columns = schema
                .active_specs()
                .filter(|c| !c.transient)
                .map(|c| c.name.clone())
                .collect();
            vec![PairGraph {
                left: "star".into(),
                right: "all".into(),
                output_columns,
                edges,
                virtual_nodes: source.issued(),
            }]
        }
    }
}

/// Embedding artifacts for one pair graph.
#[derive(Debug)]
pub struct PairEmbedding {
    pub index: NodeIndex,
    pub degrees: Vec<f64>,
    pub embedding: EmbeddingMatrix,
    pub penultimate: Option<EmbeddingMatrix>,
    pub zero_rows: u64,
    pub memory: MemoryModel,
    /// Present for unchunked runs.
    pub transition: Option<SparseTransition>,
    /// Present for chunked runs.
    pub chunk_run: Option<ChunkRun>,
}

#[derive(Debug)]
pub struct ChunkRun {
    pub plan: ChunkPlan,
    pub finals: Vec<ChunkEmbedding>,
    pub degrees: Vec<Vec<(EntityId, f64)>>,
}

/// Embed one pair graph, chunked when `chunks > 1`.
pub fn embed_pair_graph(graph: &PairGraph, cfg: &PipelineConfig) -> Result<PairEmbedding> {
    let dim = cfg.embed.dim as u64;
    if cfg.chunks <= 1 {
        let transition = SparseTransition::build(&graph.edges)?;
        let memory = MemoryModel::measured(&transition, dim);
        log::info!("pair {}: {} nodes, {} entries, {memory}", graph.tag(), transition.node_count(), transition.entry_count());
        let iterates = embed_pair_observed(&transition, &cfg.embed, |_, _| {})?;
        return Ok(PairEmbedding {
            index: transition.index().clone(),
            degrees: transition.degrees().to_vec(),
            embedding: iterates.embedding,
            penultimate: iterates.penultimate,
            zero_rows: iterates.zero_rows,
            memory,
            transition: Some(transition),
            chunk_run: None,
        });
    }

    let (plan, chunk_edges) = split_graph(&graph.edges, cfg.chunks, cfg.embed.seed)?;
    let global = NodeIndex::from_edges(&graph.edges);
    let mut finals = Vec::with_capacity(cfg.chunks);
    let mut penultimates = Vec::with_capacity(cfg.chunks);
    let mut chunk_degrees: Vec<Vec<(EntityId, f64)>> = Vec::with_capacity(cfg.chunks);
    let mut degrees = vec![0.0f64; global.len()];
    let mut zero_rows = 0u64;
    let mut m_objects = 0u64;
    for edges in &chunk_edges {
        let transition = SparseTransition::build(edges)?;
        m_objects += transition.entry_count() as u64;
        let iterates = embed_pair_observed(&transition, &cfg.embed, |_, _| {})?;
        zero_rows += iterates.zero_rows;
        let mut per_chunk = Vec::with_capacity(transition.node_count());
        for (pos, &deg) in transition.degrees().iter().enumerate() {
            let id = transition.index().id_at(pos);
            per_chunk.push((id, deg));
            degrees[global.position(id).unwrap() as usize] += deg;
        }
        chunk_degrees.push(per_chunk);
        if let Some(p) = iterates.penultimate {
            penultimates.push(ChunkEmbedding {
                index: transition.index().clone(),
                matrix: p,
            });
        }
        finals.push(ChunkEmbedding {
            index: transition.index().clone(),
            matrix: iterates.embedding,
        });
    }

    let mut merged = merge_embeddings(&finals, &plan, &global)?;
    let penultimate = if cfg.embed.keep_penultimate {
        Some(merge_embeddings(&penultimates, &plan, &global)?)
    } else {
        None
    };
    if cfg.normalize_merged {
        merged.l2_normalize_rows();
    }

    let memory = MemoryModel {
        p_objects: global.len() as u64,
        m_objects,
        t_objects: 2 * dim * global.len() as u64,
    };
    Ok(PairEmbedding {
        index: global,
        degrees,
        embedding: merged,
        penultimate,
        zero_rows,
        memory,
        transition: None,
        chunk_run: Some(ChunkRun {
            plan,
            finals,
            degrees: chunk_degrees,
        }),
    })
}

fn sanitize(segment: &str) -> String {
    segment
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn pair_key(left: &str, right: &str, column: &str) -> String {
    format!("{}__{}__{}", sanitize(left), sanitize(right), sanitize(column))
}

pub fn emb_file_name(left: &str, right: &str, column: &str) -> String {
    format!("emb__{}.tsv", pair_key(left, right, column))
}

pub fn penultimate_file_name(left: &str, right: &str, column: &str) -> String {
    format!("penultimate__{}.tsv", pair_key(left, right, column))
}

pub fn chunk_file_name(chunk: usize, left: &str, right: &str, column: &str) -> String {
    format!("chunk{chunk:04}__emb__{}.tsv", pair_key(left, right, column))
}

pub fn occurrences_file_name(left: &str, right: &str, column: &str) -> String {
    format!("occ__{}.tsv", pair_key(left, right, column))
}

#[derive(Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Run the whole embedding pipeline and write output files plus the manifest.
pub fn run_embed(cfg: &PipelineConfig) -> Result<RunOutput> {
    let started = Instant::now();
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CleoraError::io(&cfg.output_dir, e))?;
    let sha256 = file_sha256(&cfg.input)?;
    let built = build_graphs(cfg)?;

    // predicted footprint, before any matrix is built
    for graph in &built.graphs {
        let mut nodes: Vec<EntityId> = graph.edges.iter().flat_map(|e| [e.from, e.to]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let estimate = MemoryModel::estimate(
            nodes.len() as u64,
            graph.edges.len() as u64,
            cfg.embed.dim as u64,
        );
        log::info!(
            "pair {}: {} nodes, {} expanded edges, estimated {estimate}",
            graph.tag(),
            nodes.len(),
            graph.edges.len()
        );
    }

    let mut files = Vec::new();
    let mut pairs = Vec::new();
    for graph in &built.graphs {
        let embedded = embed_pair_graph(graph, cfg)?;
        let mut outputs = Vec::new();

        for column in &graph.output_columns {
            let name = emb_file_name(&graph.left, &graph.right, column);
            let path = cfg.output_dir.join(&name);
            let written = write_embeddings(
                &embedded.embedding,
                &embedded.index,
                &embedded.degrees,
                &built.dict,
                column,
                &path,
            )?;
            log::info!("wrote {written} rows to {}", path.display());
            outputs.push(name);
            files.push(path);

            if let Some(pen) = &embedded.penultimate {
                let name = penultimate_file_name(&graph.left, &graph.right, column);
                let path = cfg.output_dir.join(&name);
                write_embeddings(
                    pen,
                    &embedded.index,
                    &embedded.degrees,
                    &built.dict,
                    column,
                    &path,
                )?;
                outputs.push(name);
                files.push(path);
            }
        }

        if let Some(chunk_run) = &embedded.chunk_run {
            let chunk_files = write_chunk_artifacts(graph, chunk_run, &built.dict, cfg)?;
            for name in chunk_files {
                files.push(cfg.output_dir.join(&name));
                outputs.push(name);
            }
        }

        pairs.push(PairManifest {
            left: graph.left.clone(),
            right: graph.right.clone(),
            output_columns: graph.output_columns.clone(),
            nodes: embedded.index.len() as u64,
            virtual_nodes: graph.virtual_nodes,
            edges: graph.edges.len() as u64,
            memory: embedded.memory,
            memory_bytes: embedded.memory.bytes(),
            zero_rows: embedded.zero_rows,
            outputs,
        });
    }

    let manifest = RunManifest {
        version: 1,
        created_unix_ms: now_unix_ms(),
        input: InputManifest {
            path: cfg.input.clone(),
            format: cfg.format,
            sha256,
            rows_read: built.stats.rows_read,
            rows_skipped: built.stats.rows_skipped,
        },
        schema: built.schema.source().to_string(),
        weighted: cfg.weighted,
        strict: cfg.strict,
        expansion: cfg.expansion,
        dim: cfg.embed.dim,
        iterations: cfg.embed.iterations,
        seed: cfg.embed.seed,
        chunks: cfg.chunks,
        keep_penultimate: cfg.embed.keep_penultimate,
        normalize_merged: cfg.normalize_merged,
        wall_time_ms: started.elapsed().as_millis() as u64,
        pairs,
    };
    let manifest_path = manifest.save(&cfg.output_dir)?;
    Ok(RunOutput {
        manifest,
        manifest_path,
        files,
    })
}

/// Per-chunk embedding files plus the occurrence sidecars used by
/// `merge-chunks`.
fn write_chunk_artifacts(
    graph: &PairGraph,
    chunk_run: &ChunkRun,
    dict: &Dictionary,
    cfg: &PipelineConfig,
) -> Result<Vec<String>> {
    use std::io::Write;

    let mut names = Vec::new();
    for (q, chunk) in chunk_run.finals.iter().enumerate() {
        let degrees: Vec<f64> = {
            let map: HashMap<EntityId, f64> = chunk_run.degrees[q].iter().copied().collect();
            (0..chunk.index.len())
                .map(|r| map.get(&chunk.index.id_at(r)).copied().unwrap_or(0.0))
                .collect()
        };
        for column in &graph.output_columns {
            let name = chunk_file_name(q, &graph.left, &graph.right, column);
            let path = cfg.output_dir.join(&name);
            write_embeddings(&chunk.matrix, &chunk.index, &degrees, dict, column, &path)?;
            names.push(name);
        }
    }

    for column in &graph.output_columns {
        let name = occurrences_file_name(&graph.left, &graph.right, column);
        let path = cfg.output_dir.join(&name);
        let file = std::fs::File::create(&path).map_err(|e| CleoraError::io(&path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for q in 0..chunk_run.plan.chunk_count() {
            let mut ids: Vec<EntityId> = chunk_run
                .plan
                .occurrences(q)
                .keys()
                .copied()
                .filter(|id| !id.is_virtual())
                .collect();
            ids.sort_unstable();
            for id in ids {
                let Some(label) = dict.label(column, id) else {
                    continue;
                };
                let count = chunk_run.plan.occurrences(q)[&id];
                writeln!(out, "{label}\t{q}\t{count}").map_err(|e| CleoraError::io(&path, e))?;
            }
        }
        out.flush().map_err(|e| CleoraError::io(&path, e))?;
        names.push(name);
    }
    Ok(names)
}

/// Clique-expand hyperedges over two named columns, e.g. to turn a test-edge
/// file into query pairs.
pub fn expand_named_pair(
    schema: &ColumnSchema,
    hyperedges: &[Hyperedge],
    left: &str,
    right: &str,
) -> Result<Vec<Edge>> {
    let find = |name: &str| {
        (0..schema.active_count())
            .find(|&i| schema.active_spec(i).name == name)
            .ok_or_else(|| {
                CleoraError::Config(format!("column '{name}' does not exist in the schema"))
            })
    };
    let pair = crate::expansion::RelationPair {
        left: find(left)?,
        right: find(right)?,
    };
    if pair.is_reflexive() && !schema.active_spec(pair.left).reflexive {
        return Err(CleoraError::Config(format!(
            "column '{left}' is not reflexive; pick two distinct columns"
        )));
    }
    let mut edges = Vec::new();
    for h in hyperedges {
        clique_expand_into(h, pair, &mut edges);
    }
    Ok(edges)
}

/// Ordered query pairs from an edge list, exact duplicates removed, file
/// order preserved.
pub fn query_pairs(edges: &[Edge]) -> Vec<(EntityId, EntityId)> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for e in edges {
        if seen.insert((e.from, e.to)) {
            out.push((e.from, e.to));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub enum SweepTask {
    LinkPrediction {
        test_edges: PathBuf,
        negatives: usize,
        sample: usize,
    },
    Classification {
        labels: PathBuf,
    },
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub iteration: usize,
    pub values: Vec<(&'static str, f64)>,
}

/// Embed once up to the largest requested iteration, evaluating the snapshot
/// at every requested step. Writes `sweep.tsv` into the output directory.
///
/// Restricted to schemas that expand to a single relation pair, so the
/// metric series refers to one embedding matrix.
pub fn run_sweep(
    cfg: &PipelineConfig,
    iterations: &[usize],
    task: &SweepTask,
    sgd: &SgdConfig,
) -> Result<Vec<SweepRow>> {
    if iterations.is_empty() {
        return Err(CleoraError::Config("no iteration values to sweep".into()));
    }
    if cfg.chunks > 1 {
        return Err(CleoraError::Config(
            "sweep does not support chunked runs".into(),
        ));
    }
    let mut wanted: Vec<usize> = iterations.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    if wanted[0] == 0 {
        return Err(CleoraError::Config("iteration values must be >= 1".into()));
    }

    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CleoraError::io(&cfg.output_dir, e))?;
    let built = build_graphs(cfg)?;
    if built.graphs.len() != 1 {
        return Err(CleoraError::Config(format!(
            "sweep requires a single relation pair, schema expands to {}",
            built.graphs.len()
        )));
    }
    let graph = &built.graphs[0];
    let transition = SparseTransition::build(&graph.edges)?;

    // task data is prepared once; every snapshot is evaluated identically
    enum Prepared {
        Lp {
            train: Vec<(EntityId, EntityId)>,
            test: Vec<(EntityId, EntityId)>,
            negatives: Vec<EntityId>,
            nodes: Vec<EntityId>,
            sample: usize,
        },
        Cls {
            labeled: Vec<(EntityId, String)>,
        },
    }
    let prepared = match task {
        SweepTask::LinkPrediction {
            test_edges,
            negatives,
            sample,
        } => {
            let mut dict = Dictionary::new();
            let opts = IngestOptions {
                format: cfg.format,
                weighted: cfg.weighted,
                strict: cfg.strict,
            };
            let (test_hyper, _) = read_hyperedges(test_edges, &built.schema, opts, &mut dict)?;
            let test_expanded = expand_all(&built.schema, &test_hyper, cfg.expansion)
                .into_iter()
                .next()
                .map(|g| g.edges)
                .unwrap_or_default();
            let nodes: Vec<EntityId> = transition
                .index()
                .ids()
                .iter()
                .copied()
                .filter(|id| !id.is_virtual())
                .collect();
            Prepared::Lp {
                train: transition.undirected_pairs(),
                test: query_pairs(&test_expanded),
                negatives: popular_negatives(transition.index(), transition.degrees(), *negatives),
                nodes,
                sample: *sample,
            }
        }
        SweepTask::Classification { labels } => {
            let rows = crate::model::read_labels(labels)?;
            let labeled = crate::model::resolve_labels(&rows, &graph.output_columns, |id| {
                transition.index().position(id).is_some()
            });
            Prepared::Cls { labeled }
        }
    };

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut failure: Option<CleoraError> = None;
    let embed_cfg = EmbedConfig {
        iterations: *wanted.last().unwrap(),
        keep_penultimate: false,
        ..cfg.embed
    };
    embed_pair_observed(&transition, &embed_cfg, |i, t| {
        if failure.is_some() || !wanted.contains(&i) {
            return;
        }
        let source = MatrixSource {
            index: transition.index(),
            matrix: t,
        };
        let evaluated: Result<Vec<(&'static str, f64)>> = match &prepared {
            Prepared::Lp {
                train,
                test,
                negatives,
                nodes,
                sample,
            } => train_link_predictor(train, nodes, &source, sgd).and_then(|model| {
                let report = evaluate_link_prediction(
                    &model, test, negatives, &source, *sample, sgd.seed,
                )?;
                Ok(vec![
                    ("mrr", report.mrr),
                    ("hr10", report.hit_rate_at_10),
                    ("mean_rank", report.mean_rank),
                ])
            }),
            Prepared::Cls { labeled } => {
                crate::eval::classify_nodes(labeled, &source, sgd).map(|report| {
                    vec![
                        ("micro_f1", report.micro_f1),
                        ("macro_f1", report.macro_f1),
                    ]
                })
            }
        };
        match evaluated {
            Ok(values) => rows.push(SweepRow {
                iteration: i,
                values,
            }),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let path = cfg.output_dir.join("sweep.tsv");
    {
        use std::io::Write;
        let file = std::fs::File::create(&path).map_err(|e| CleoraError::io(&path, e))?;
        let mut out = std::io::BufWriter::new(file);
        if let Some(first) = rows.first() {
            write!(out, "iteration").map_err(|e| CleoraError::io(&path, e))?;
            for (name, _) in &first.values {
                write!(out, "\t{name}").map_err(|e| CleoraError::io(&path, e))?;
            }
            writeln!(out).map_err(|e| CleoraError::io(&path, e))?;
        }
        for row in &rows {
            write!(out, "{}", row.iteration).map_err(|e| CleoraError::io(&path, e))?;
            for (_, value) in &row.values {
                write!(out, "\t{value:.6}").map_err(|e| CleoraError::io(&path, e))?;
            }
            writeln!(out).map_err(|e| CleoraError::io(&path, e))?;
        }
        out.flush().map_err(|e| CleoraError::io(&path, e))?;
    }
    Ok(rows)
}
