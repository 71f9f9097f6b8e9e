//! Downstream-task harness: ranked link prediction (MRR / HR@10 / MR) and
//! one-vs-rest node classification (micro / macro F1).
//!
//! Link prediction follows the popularity-negatives protocol: every test
//! edge is ranked against the highest-degree nodes of the training graph,
//! paired with the query's start node. Training negatives, in contrast, are
//! uniform-random pairs. Ranks count candidates with strictly greater score,
//! so they are invariant under any strictly increasing transform of the
//! model's output.

pub mod logreg;
pub mod metrics;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CleoraError, Result};
use crate::hashing::EntityId;
use crate::inductive::VectorSource;
use crate::sparsemat::NodeIndex;

pub use logreg::{train_binary, LogisticModel, SgdConfig};
pub use metrics::{f1_from_predictions, hit_rate_at, mean_rank, mrr, F1Scores};

/// Elementwise product of two equal-length vectors.
pub fn hadamard(u: &[f32], v: &[f32]) -> Result<Vec<f32>> {
    if u.len() != v.len() {
        return Err(CleoraError::Internal(format!(
            "hadamard product of vectors with {} and {} dimensions",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(&a, &b)| a * b).collect())
}

/// The `n` highest-degree non-virtual nodes, ties broken by ascending id.
pub fn popular_negatives(index: &NodeIndex, degrees: &[f64], n: usize) -> Vec<EntityId> {
    let mut nodes: Vec<(f64, EntityId)> = (0..index.len())
        .filter(|&r| !index.id_at(r).is_virtual())
        .map(|r| (degrees[r], index.id_at(r)))
        .collect();
    nodes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    nodes.truncate(n);
    nodes.into_iter().map(|(_, id)| id).collect()
}

/// Same selection over label/degree rows loaded from an embedding file.
pub fn popular_negatives_from_rows(rows: &[(EntityId, f64)], n: usize) -> Vec<EntityId> {
    let mut nodes: Vec<(f64, EntityId)> = rows.iter().map(|&(id, d)| (d, id)).collect();
    nodes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    nodes.truncate(n);
    nodes.into_iter().map(|(_, id)| id).collect()
}

/// Rank of one positive pair among its negative candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankResult {
    /// `1 + |negatives scoring strictly higher|`; 1 is best.
    pub rank: usize,
    /// Total candidates considered (positive included).
    pub candidates: usize,
}

/// Score `(start, candidate)` pairs and rank the true end node. The true end
/// node is excluded from the negative pool; candidates with strictly greater
/// score push the rank down. Returns `None` when either endpoint is not
/// embedded.
pub fn rank_query(
    model: &LogisticModel,
    positive: (EntityId, EntityId),
    negatives: &[EntityId],
    source: &impl VectorSource,
) -> Option<RankResult> {
    let u = source.get(positive.0)?;
    let v = source.get(positive.1)?;
    let positive_score = model.pair_margin(u, v);
    let mut rank = 1usize;
    let mut candidates = 1usize;
    for &n in negatives {
        if n == positive.1 {
            continue;
        }
        let Some(nv) = source.get(n) else { continue };
        candidates += 1;
        if model.pair_margin(u, nv) > positive_score {
            rank += 1;
        }
    }
    Some(RankResult { rank, candidates })
}

/// Train the binary link predictor: positives are real edges, each paired
/// with one uniform-random node pair as a negative. Hadamard features are
/// computed on the fly.
pub fn train_link_predictor(
    positives: &[(EntityId, EntityId)],
    nodes: &[EntityId],
    source: &impl VectorSource,
    cfg: &SgdConfig,
) -> Result<LogisticModel> {
    if nodes.is_empty() {
        return Err(CleoraError::Config(
            "cannot sample negative pairs from an empty node pool".into(),
        ));
    }
    let usable: Vec<(EntityId, EntityId)> = positives
        .iter()
        .copied()
        .filter(|&(a, b)| source.get(a).is_some() && source.get(b).is_some())
        .collect();
    if usable.is_empty() {
        return Err(CleoraError::Config(
            "no training edge has both endpoints embedded".into(),
        ));
    }
    if usable.len() < positives.len() {
        log::warn!(
            "{} training edges skipped: endpoint not embedded",
            positives.len() - usable.len()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e65_6761_7469_7665);
    let negatives: Vec<(EntityId, EntityId)> = (0..usable.len())
        .map(|_| {
            (
                nodes[rng.random_range(0..nodes.len())],
                nodes[rng.random_range(0..nodes.len())],
            )
        })
        .collect();

    let dim = source.dim();
    let model = train_binary(usable.len() * 2, dim, cfg, |i, buf| {
        let (pair, target) = if i < usable.len() {
            (usable[i], 1.0)
        } else {
            (negatives[i - usable.len()], 0.0)
        };
        let u = source.get(pair.0).unwrap();
        let v = source.get(pair.1).unwrap();
        for ((f, &a), &b) in buf.iter_mut().zip(u).zip(v) {
            *f = a * b;
        }
        target
    });
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct LinkPredictionReport {
    pub mrr: f64,
    pub hit_rate_at_10: f64,
    pub mean_rank: f64,
    pub queries: usize,
    pub skipped: u64,
}

/// Rank up to `sample` test edges (seeded subsample when there are more)
/// against the shared negative pool and aggregate the metrics.
pub fn evaluate_link_prediction(
    model: &LogisticModel,
    test_pairs: &[(EntityId, EntityId)],
    negatives: &[EntityId],
    source: &impl VectorSource,
    sample: usize,
    seed: u64,
) -> Result<LinkPredictionReport> {
    let mut pairs: Vec<(EntityId, EntityId)> = test_pairs.to_vec();
    if pairs.len() > sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7361_6d70_6c65);
        pairs.shuffle(&mut rng);
        pairs.truncate(sample);
    }
    let results: Vec<Option<RankResult>> = pairs
        .par_iter()
        .map(|&p| rank_query(model, p, negatives, source))
        .collect();
    let ranks: Vec<usize> = results.iter().flatten().map(|r| r.rank).collect();
    let skipped = results.iter().filter(|r| r.is_none()).count() as u64;
    if skipped > 0 {
        log::warn!("{skipped} test edges skipped: endpoint not embedded");
    }
    Ok(LinkPredictionReport {
        mrr: mrr(&ranks)?,
        hit_rate_at_10: hit_rate_at(&ranks, 10)?,
        mean_rank: mean_rank(&ranks)?,
        queries: ranks.len(),
        skipped,
    })
}

/// One-vs-rest logistic models over raw embedding vectors.
#[derive(Debug, Clone)]
pub struct OneVsRest {
    pub classes: Vec<String>,
    pub models: Vec<LogisticModel>,
}

impl OneVsRest {
    /// Index into `classes` of the highest-margin model.
    pub fn predict(&self, x: &[f32]) -> usize {
        let mut best = 0usize;
        let mut best_margin = f64::NEG_INFINITY;
        for (c, model) in self.models.iter().enumerate() {
            let m = model.margin(x);
            if m > best_margin {
                best_margin = m;
                best = c;
            }
        }
        best
    }
}

/// Train one binary model per class. Classes train in parallel; each model's
/// updates stay sequential, so the result is worker-count independent.
pub fn train_one_vs_rest(
    examples: &[(EntityId, usize)],
    classes: Vec<String>,
    source: &impl VectorSource,
    cfg: &SgdConfig,
) -> OneVsRest {
    let dim = source.dim();
    let models: Vec<LogisticModel> = (0..classes.len())
        .into_par_iter()
        .map(|class| {
            let class_cfg = SgdConfig {
                seed: cfg.seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..*cfg
            };
            train_binary(examples.len(), dim, &class_cfg, |i, buf| {
                let (id, label) = examples[i];
                buf.copy_from_slice(source.get(id).unwrap());
                f64::from(label == class)
            })
        })
        .collect();
    OneVsRest { classes, models }
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<(String, f64)>,
    pub train_size: usize,
    pub test_size: usize,
    pub skipped: u64,
    /// Classes absent from the train split (scored zero in macro F1).
    pub missing_in_train: Vec<String>,
}

/// 80/20 node classification over raw embeddings.
///
/// Labeled nodes are deduplicated, sorted, seeded-shuffled and split; a
/// one-vs-rest model is trained on the first 80% and evaluated on the rest.
pub fn classify_nodes(
    labeled: &[(EntityId, String)],
    source: &impl VectorSource,
    cfg: &SgdConfig,
) -> Result<ClassificationReport> {
    let mut skipped = 0u64;
    let mut seen = std::collections::HashSet::new();
    let mut usable: Vec<(EntityId, String)> = Vec::with_capacity(labeled.len());
    for (id, class) in labeled {
        if source.get(*id).is_none() {
            skipped += 1;
            continue;
        }
        if seen.insert(*id) {
            usable.push((*id, class.clone()));
        }
    }
    if usable.is_empty() {
        return Err(CleoraError::Config(
            "no labeled node is present in the embedding".into(),
        ));
    }
    usable.sort_by_key(|&(id, _)| id);

    let mut classes: Vec<String> = usable.iter().map(|(_, c)| c.clone()).collect();
    classes.sort();
    classes.dedup();
    let class_index = |c: &str| classes.iter().position(|x| x == c).unwrap();
    let examples: Vec<(EntityId, usize)> = usable
        .iter()
        .map(|(id, c)| (*id, class_index(c)))
        .collect();

    if examples.len() < 2 {
        return Err(CleoraError::Config(
            "not enough labeled nodes for an 80/20 split".into(),
        ));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7370_6c69_74);
    order.shuffle(&mut rng);
    let train_size =
        (((examples.len() as f64) * 0.8).round() as usize).clamp(1, examples.len() - 1);
    let train: Vec<(EntityId, usize)> = order[..train_size].iter().map(|&i| examples[i]).collect();
    let test: Vec<(EntityId, usize)> = order[train_size..].iter().map(|&i| examples[i]).collect();

    let present: std::collections::HashSet<usize> = train.iter().map(|&(_, c)| c).collect();
    let missing_in_train: Vec<String> = (0..classes.len())
        .filter(|c| !present.contains(c))
        .map(|c| classes[c].clone())
        .collect();
    for class in &missing_in_train {
        log::warn!("class '{class}' absent from the train split; its F1 will be zero");
    }

    let ovr = train_one_vs_rest(&train, classes.clone(), source, cfg);
    let truth_pred: Vec<(usize, usize)> = test
        .par_iter()
        .map(|&(id, truth)| (truth, ovr.predict(source.get(id).unwrap())))
        .collect();
    let scores = f1_from_predictions(&truth_pred, classes.len())?;

    Ok(ClassificationReport {
        micro_f1: scores.micro_f1,
        macro_f1: scores.macro_f1,
        per_class: classes
            .iter()
            .cloned()
            .zip(scores.per_class.iter().copied())
            .collect(),
        train_size: train.len(),
        test_size: test.len(),
        skipped,
        missing_in_train,
    })
}
