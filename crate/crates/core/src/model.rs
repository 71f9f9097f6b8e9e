//! Working with a written model directory: loading embedding tables back,
//! reconstructing new nodes, evaluating link prediction and classification,
//! and merging chunk files.
//!
//! Entities in the files are keyed by label; ids are recovered by re-hashing
//! the label under its column namespace, which is exactly how they were
//! assigned during training.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::embed::{read_embeddings, write_embedding_rows, EmbeddingRow};
use crate::error::{CleoraError, Result};
use crate::eval::{
    classify_nodes, evaluate_link_prediction, popular_negatives_from_rows, train_link_predictor,
    ClassificationReport, LinkPredictionReport, SgdConfig,
};
use crate::expansion::Expansion;
use crate::hashing::EntityId;
use crate::inductive::{reconstruct_batch, Hops, MapSource};
use crate::ingest::{read_hyperedges, ColumnSchema, Dictionary, IngestOptions};
use crate::manifest::{PairManifest, RunManifest};
use crate::pipeline::{
    emb_file_name, expand_named_pair, pair_key, penultimate_file_name, query_pairs,
};

/// Pick the relation pair to operate on. With a single pair no selector is
/// needed; otherwise `requested` must match a manifest entry.
pub fn select_pair<'m>(
    manifest: &'m RunManifest,
    requested: Option<(&str, &str)>,
) -> Result<&'m PairManifest> {
    match requested {
        Some((left, right)) => manifest
            .pairs
            .iter()
            .find(|p| p.left == left && p.right == right)
            .ok_or_else(|| {
                CleoraError::Config(format!(
                    "model has no relation pair {left}~{right}; available: {}",
                    manifest
                        .pairs
                        .iter()
                        .map(|p| format!("{}~{}", p.left, p.right))
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            }),
        None if manifest.pairs.len() == 1 => Ok(&manifest.pairs[0]),
        None => Err(CleoraError::Config(format!(
            "model has {} relation pairs; pick one with --pair",
            manifest.pairs.len()
        ))),
    }
}

/// One pair's embedding table loaded from disk.
pub struct LoadedPair {
    pub left: String,
    pub right: String,
    pub columns: Vec<String>,
    pub source: MapSource,
    /// `(id, degree)` rows for popularity-based negative sampling.
    pub degrees: Vec<(EntityId, f64)>,
    /// id -> (column, label) for every loaded entity.
    pub labels: HashMap<EntityId, (String, String)>,
    pub node_ids: Vec<EntityId>,
}

/// Load the final (or penultimate) embedding files of one pair.
pub fn load_pair(
    model_dir: &Path,
    pair: &PairManifest,
    penultimate: bool,
) -> Result<LoadedPair> {
    let mut all: Vec<(String, Vec<EmbeddingRow>)> = Vec::new();
    for column in &pair.output_columns {
        let name = if penultimate {
            penultimate_file_name(&pair.left, &pair.right, column)
        } else {
            emb_file_name(&pair.left, &pair.right, column)
        };
        let path = model_dir.join(&name);
        if penultimate && !path.exists() {
            return Err(CleoraError::Config(format!(
                "{} not found; re-run embedding with --keep-penultimate",
                path.display()
            )));
        }
        all.push((column.clone(), read_embeddings(&path)?));
    }

    let dim = all
        .iter()
        .flat_map(|(_, rows)| rows.first())
        .map(|r| r.vector.len())
        .next()
        .ok_or_else(|| CleoraError::Config("embedding files are empty".into()))?;

    let mut source = MapSource::new(dim);
    let mut degrees = Vec::new();
    let mut labels = HashMap::new();
    for (column, rows) in all {
        for row in rows {
            if row.vector.len() != dim {
                return Err(CleoraError::Config(format!(
                    "row '{}' has {} dimensions, expected {dim}",
                    row.label,
                    row.vector.len()
                )));
            }
            let id = EntityId::from_label(&column, &row.label);
            if source.contains(id) {
                continue; // same entity listed for both columns of the pair
            }
            source.insert(id, row.vector)?;
            degrees.push((id, row.degree));
            labels.insert(id, (column.clone(), row.label));
        }
    }
    let mut node_ids: Vec<EntityId> = degrees.iter().map(|&(id, _)| id).collect();
    node_ids.sort_unstable();
    Ok(LoadedPair {
        left: pair.left.clone(),
        right: pair.right.clone(),
        columns: pair.output_columns.clone(),
        source,
        degrees,
        labels,
        node_ids,
    })
}

/// The two schema columns whose cross product forms query pairs. For clique
/// models this is the selected relation pair itself; star models need either
/// an explicit choice, a single reflexive column, or exactly two columns.
pub fn resolve_query_columns(
    manifest: &RunManifest,
    schema: &ColumnSchema,
    pair: &PairManifest,
    requested: Option<(&str, &str)>,
) -> Result<(String, String)> {
    if manifest.expansion == Expansion::Clique {
        return Ok((pair.left.clone(), pair.right.clone()));
    }
    if let Some((l, r)) = requested {
        return Ok((l.to_string(), r.to_string()));
    }
    let active: Vec<&crate::ingest::ColumnSpec> = schema.active_specs().collect();
    if let [only] = active.as_slice() {
        if only.reflexive {
            return Ok((only.name.clone(), only.name.clone()));
        }
    }
    if let [a, b] = active.as_slice() {
        return Ok((a.name.clone(), b.name.clone()));
    }
    Err(CleoraError::Config(
        "cannot infer query columns for a star model with this schema; pass --pair LEFT,RIGHT"
            .into(),
    ))
}

/// Label file rows: `label<TAB>class`.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let file = std::fs::File::open(path).map_err(|e| CleoraError::io(path, e))?;
    let mut rows = Vec::new();
    for (line_no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CleoraError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let Some((label, class)) = line.split_once('\t') else {
            return Err(CleoraError::Row {
                path: path.to_path_buf(),
                line: line_no as u64 + 1,
                msg: "expected label<TAB>class".into(),
            });
        };
        rows.push((label.to_string(), class.to_string()));
    }
    Ok(rows)
}

/// Resolve labels to entity ids across candidate column namespaces. Labels
/// matching no embedded entity are skipped; labels matching under several
/// namespaces are ambiguous and skipped with a warning.
pub fn resolve_labels(
    rows: &[(String, String)],
    columns: &[String],
    embedded: impl Fn(EntityId) -> bool,
) -> Vec<(EntityId, String)> {
    let mut out = Vec::with_capacity(rows.len());
    let mut ambiguous = 0u64;
    let mut unknown = 0u64;
    for (label, class) in rows {
        let matches: Vec<EntityId> = columns
            .iter()
            .map(|c| EntityId::from_label(c, label))
            .filter(|&id| embedded(id))
            .collect();
        match matches.as_slice() {
            [id] => out.push((*id, class.clone())),
            [] => unknown += 1,
            _ => ambiguous += 1,
        }
    }
    if unknown > 0 {
        log::warn!("{unknown} labels not present in the embedding");
    }
    if ambiguous > 0 {
        log::warn!("{ambiguous} labels matched more than one column; skipped");
    }
    out
}

#[derive(Debug, Clone)]
pub struct ReconstructArgs {
    pub model_dir: PathBuf,
    pub input: PathBuf,
    pub hops: Hops,
    /// Average over `T_I` instead of the default `T_{I-1}`.
    pub use_final: bool,
    pub output_dir: PathBuf,
    pub pair: Option<(String, String)>,
}

#[derive(Debug)]
pub struct ReconstructOutcome {
    pub files: Vec<PathBuf>,
    pub embedded: usize,
    pub unembedded_labels: Vec<String>,
}

/// Embed the new nodes of `input` from a stored model by weighted averaging.
pub fn run_reconstruct(args: &ReconstructArgs) -> Result<ReconstructOutcome> {
    let manifest = RunManifest::load_dir(&args.model_dir)?;
    let schema = ColumnSchema::parse(&manifest.schema)?;
    let pair = select_pair(
        &manifest,
        args.pair.as_ref().map(|(l, r)| (l.as_str(), r.as_str())),
    )?;
    let loaded = load_pair(&args.model_dir, pair, !args.use_final)?;

    let mut dict = Dictionary::new();
    let opts = IngestOptions {
        format: manifest.input.format,
        weighted: manifest.weighted,
        strict: manifest.strict,
    };
    let (hyperedges, _) = read_hyperedges(&args.input, &schema, opts, &mut dict)?;
    let graphs = crate::pipeline::expand_all(&schema, &hyperedges, manifest.expansion);
    let edges = match manifest.expansion {
        Expansion::Star => graphs.into_iter().next().map(|g| g.edges).unwrap_or_default(),
        Expansion::Clique => {
            // restrict to the selected pair's columns
            expand_named_pair(&schema, &hyperedges, &pair.left, &pair.right)?
        }
    };
    if edges.is_empty() {
        return Err(CleoraError::Config(
            "attachment input produced no edges for the selected pair".into(),
        ));
    }

    let outcome = reconstruct_batch(&edges, &loaded.source, args.hops)?;

    // incident weight sums over the attachment edges (the degree column)
    let mut degrees: HashMap<EntityId, f64> = HashMap::new();
    for e in &edges {
        *degrees.entry(e.from).or_insert(0.0) += e.weight as f64;
        if e.from != e.to {
            *degrees.entry(e.to).or_insert(0.0) += e.weight as f64;
        }
    }

    std::fs::create_dir_all(&args.output_dir)
        .map_err(|e| CleoraError::io(&args.output_dir, e))?;
    let by_id: HashMap<EntityId, &Vec<f32>> = outcome
        .embedded
        .iter()
        .map(|r| (r.id, &r.vector))
        .collect();
    let mut files = Vec::new();
    for column in &loaded.columns {
        let Some(namespace) = dict.namespace(column) else {
            continue;
        };
        let mut ids: Vec<EntityId> = namespace
            .keys()
            .copied()
            .filter(|id| by_id.contains_key(id))
            .collect();
        ids.sort_unstable();
        if ids.is_empty() {
            continue;
        }
        let name = format!("recon__{}.tsv", pair_key(&pair.left, &pair.right, column));
        let path = args.output_dir.join(&name);
        write_embedding_rows(
            &path,
            ids.iter().map(|id| {
                (
                    namespace[id].as_str(),
                    degrees.get(id).copied().unwrap_or(0.0),
                    by_id[id].as_slice(),
                )
            }),
        )?;
        files.push(path);
    }

    let mut unembedded_labels: Vec<String> = outcome
        .unembedded
        .iter()
        .filter_map(|id| {
            schema
                .active_specs()
                .find_map(|c| dict.label(&c.name, *id))
                .map(|l| l.to_string())
        })
        .collect();
    unembedded_labels.sort();
    Ok(ReconstructOutcome {
        files,
        embedded: outcome.embedded.len(),
        unembedded_labels,
    })
}

#[derive(Debug, Clone)]
pub struct EvalLpArgs {
    pub model_dir: PathBuf,
    pub test_edges: PathBuf,
    /// Defaults to the training input recorded in the manifest.
    pub train_edges: Option<PathBuf>,
    pub negatives: usize,
    pub sample: usize,
    pub sgd: SgdConfig,
    pub pair: Option<(String, String)>,
}

/// Ranked link prediction over a stored model.
pub fn run_eval_lp(args: &EvalLpArgs) -> Result<LinkPredictionReport> {
    let manifest = RunManifest::load_dir(&args.model_dir)?;
    let schema = ColumnSchema::parse(&manifest.schema)?;
    let pair = select_pair(
        &manifest,
        args.pair.as_ref().map(|(l, r)| (l.as_str(), r.as_str())),
    )?;
    let loaded = load_pair(&args.model_dir, pair, false)?;
    let (left, right) = resolve_query_columns(
        &manifest,
        &schema,
        pair,
        args.pair.as_ref().map(|(l, r)| (l.as_str(), r.as_str())),
    )?;

    let opts = IngestOptions {
        format: manifest.input.format,
        weighted: manifest.weighted,
        strict: manifest.strict,
    };
    let read_pairs = |path: &Path| -> Result<Vec<(EntityId, EntityId)>> {
        let mut dict = Dictionary::new();
        let (hyperedges, _) = read_hyperedges(path, &schema, opts, &mut dict)?;
        Ok(query_pairs(&expand_named_pair(
            &schema,
            &hyperedges,
            &left,
            &right,
        )?))
    };

    let train_path = args
        .train_edges
        .clone()
        .unwrap_or_else(|| manifest.input.path.clone());
    let train = read_pairs(&train_path)?;
    let test = read_pairs(&args.test_edges)?;
    if test.is_empty() {
        return Err(CleoraError::Config("no test edges to evaluate".into()));
    }

    let model = train_link_predictor(&train, &loaded.node_ids, &loaded.source, &args.sgd)?;
    let negatives = popular_negatives_from_rows(&loaded.degrees, args.negatives);
    evaluate_link_prediction(
        &model,
        &test,
        &negatives,
        &loaded.source,
        args.sample,
        args.sgd.seed,
    )
}

#[derive(Debug, Clone)]
pub struct EvalClsArgs {
    pub model_dir: PathBuf,
    pub labels: PathBuf,
    pub sgd: SgdConfig,
    pub pair: Option<(String, String)>,
}

/// Node classification (80/20 split) over a stored model.
pub fn run_eval_cls(args: &EvalClsArgs) -> Result<ClassificationReport> {
    let manifest = RunManifest::load_dir(&args.model_dir)?;
    let pair = select_pair(
        &manifest,
        args.pair.as_ref().map(|(l, r)| (l.as_str(), r.as_str())),
    )?;
    let loaded = load_pair(&args.model_dir, pair, false)?;
    let rows = read_labels(&args.labels)?;
    let labeled = resolve_labels(&rows, &loaded.columns, |id| loaded.source.contains(id));
    if labeled.is_empty() {
        return Err(CleoraError::Config(
            "no label matches an embedded entity".into(),
        ));
    }
    classify_nodes(&labeled, &loaded.source, &args.sgd)
}

/// Merge per-chunk embedding files back into final embeddings using the
/// occurrence sidecars, label-by-label. Mirrors the in-memory merge up to
/// the 7-significant-digit precision of the chunk files.
pub fn run_merge_chunks(
    chunks_dir: &Path,
    output_dir: &Path,
    normalize: bool,
) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(chunks_dir).map_err(|e| CleoraError::io(chunks_dir, e))?;
    // key = "<left>__<right>__<column>" -> [(chunk, path)]
    let mut groups: HashMap<String, Vec<(usize, PathBuf)>> = HashMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| CleoraError::io(chunks_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(rest) = name.strip_prefix("chunk") else {
            continue;
        };
        let Some((digits, key_ext)) = rest.split_once("__emb__") else {
            continue;
        };
        let Some(key) = key_ext.strip_suffix(".tsv") else {
            continue;
        };
        let Ok(chunk) = digits.parse::<usize>() else {
            continue;
        };
        groups
            .entry(key.to_string())
            .or_default()
            .push((chunk, entry.path()));
    }
    if groups.is_empty() {
        return Err(CleoraError::Config(format!(
            "no chunk embedding files found in {}",
            chunks_dir.display()
        )));
    }

    std::fs::create_dir_all(output_dir).map_err(|e| CleoraError::io(output_dir, e))?;
    let mut outputs = Vec::new();
    let mut keys: Vec<String> = groups.keys().cloned().collect();
    keys.sort();
    for key in keys {
        let mut chunk_files = groups.remove(&key).unwrap();
        chunk_files.sort();
        let column = key.rsplit("__").next().unwrap_or(&key).to_string();

        let occ_path = chunks_dir.join(format!("occ__{key}.tsv"));
        let occurrences = read_occurrences(&occ_path)?;

        // label -> (degree sum, accumulated vector)
        let mut merged: HashMap<String, (f64, Vec<f64>)> = HashMap::new();
        let mut dim = 0usize;
        for (chunk, path) in &chunk_files {
            for row in read_embeddings(path)? {
                let Some(per_chunk) = occurrences.get(&row.label) else {
                    return Err(CleoraError::Config(format!(
                        "label '{}' from {} missing from {}",
                        row.label,
                        path.display(),
                        occ_path.display()
                    )));
                };
                let total: u64 = per_chunk.values().sum();
                let count = per_chunk.get(chunk).copied().unwrap_or(0);
                if count == 0 || total == 0 {
                    continue;
                }
                let w = count as f64 / total as f64;
                dim = row.vector.len();
                let slot = merged.entry(row.label).or_insert_with(|| (0.0, Vec::new()));
                slot.0 += row.degree;
                if slot.1.is_empty() {
                    slot.1 = row.vector.iter().map(|&x| w * x as f64).collect();
                } else {
                    for (a, &x) in slot.1.iter_mut().zip(&row.vector) {
                        *a += w * x as f64;
                    }
                }
            }
        }

        let mut rows: Vec<(EntityId, String, f64, Vec<f32>)> = merged
            .into_iter()
            .map(|(label, (degree, acc))| {
                let mut v: Vec<f32> = acc.into_iter().map(|x| x as f32).collect();
                if v.len() < dim {
                    v.resize(dim, 0.0);
                }
                if normalize {
                    let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                    if norm >= 1e-12 {
                        for x in v.iter_mut() {
                            *x = (*x as f64 / norm) as f32;
                        }
                    }
                }
                (EntityId::from_label(&column, &label), label, degree, v)
            })
            .collect();
        rows.sort_by_key(|&(id, ..)| id);

        let out_path = output_dir.join(format!("emb__{key}.tsv"));
        write_embedding_rows(
            &out_path,
            rows.iter()
                .map(|(_, label, degree, v)| (label.as_str(), *degree, v.as_slice())),
        )?;
        outputs.push(out_path);
    }
    Ok(outputs)
}

/// Parse an occurrence sidecar: `label<TAB>chunk<TAB>count` rows.
fn read_occurrences(path: &Path) -> Result<HashMap<String, HashMap<usize, u64>>> {
    let file = std::fs::File::open(path).map_err(|e| CleoraError::io(path, e))?;
    let mut out: HashMap<String, HashMap<usize, u64>> = HashMap::new();
    for (line_no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CleoraError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| CleoraError::Row {
            path: path.to_path_buf(),
            line: line_no as u64 + 1,
            msg: msg.into(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [label, chunk, count] = fields.as_slice() else {
            return Err(err("expected label<TAB>chunk<TAB>count"));
        };
        let chunk: usize = chunk.parse().map_err(|_| err("bad chunk index"))?;
        let count: u64 = count.parse().map_err(|_| err("bad count"))?;
        out.entry(label.to_string())
            .or_default()
            .insert(chunk, count);
    }
    Ok(out)
}
