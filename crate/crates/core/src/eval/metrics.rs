//! Ranking and classification metrics.

use crate::error::{CleoraError, Result};

fn non_empty(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(CleoraError::Config(
            "cannot compute a metric over an empty rank list".into(),
        ));
    }
    Ok(())
}

/// Mean reciprocal rank: `(1/|Q|) * sum(1/rank_i)`.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    non_empty(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of queries ranked at or above `k`.
pub fn hit_rate_at(ranks: &[usize], k: usize) -> Result<f64> {
    non_empty(ranks)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Arithmetic mean of ranks.
pub fn mean_rank(ranks: &[usize]) -> Result<f64> {
    non_empty(ranks)?;
    Ok(ranks.iter().map(|&r| r as f64).sum::<f64>() / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<f64>,
}

/// Micro and macro F1 over `(truth, prediction)` pairs of class indices.
///
/// Micro counts true/false positives globally; for single-label multi-class
/// data it equals accuracy. Macro averages per-class F1 without weighting;
/// classes that never appear contribute zero.
pub fn f1_from_predictions(truth_pred: &[(usize, usize)], class_count: usize) -> Result<F1Scores> {
    if truth_pred.is_empty() {
        return Err(CleoraError::Config(
            "cannot compute F1 over an empty prediction list".into(),
        ));
    }
    let mut tp = vec![0u64; class_count];
    let mut fp = vec![0u64; class_count];
    let mut fn_ = vec![0u64; class_count];
    for &(truth, pred) in truth_pred {
        if truth >= class_count || pred >= class_count {
            return Err(CleoraError::Internal(format!(
                "class index out of range: ({truth}, {pred}) with {class_count} classes"
            )));
        }
        if truth == pred {
            tp[truth] += 1;
        } else {
            fp[pred] += 1;
            fn_[truth] += 1;
        }
    }

    let f1 = |tp: u64, fp: u64, fn_: u64| -> f64 {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };

    let per_class: Vec<f64> = (0..class_count)
        .map(|c| f1(tp[c], fp[c], fn_[c]))
        .collect();
    let macro_f1 = per_class.iter().sum::<f64>() / class_count.max(1) as f64;
    let micro_f1 = f1(
        tp.iter().sum::<u64>(),
        fp.iter().sum::<u64>(),
        fn_.iter().sum::<u64>(),
    );

    Ok(F1Scores {
        micro_f1,
        macro_f1,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_rank_list() {
        assert_eq!(mrr(&[1]).unwrap(), 1.0);
        assert_eq!(hit_rate_at(&[1], 10).unwrap(), 1.0);
        assert_eq!(mean_rank(&[1]).unwrap(), 1.0);
    }

    #[test]
    fn mixed_rank_list() {
        let ranks = [1, 2, 4];
        let expected = (1.0 + 0.5 + 0.25) / 3.0;
        assert!((mrr(&ranks).unwrap() - expected).abs() < 1e-12);
        assert!((mrr(&ranks).unwrap() - 0.5833333333).abs() < 1e-9);
    }

    #[test]
    fn hit_rate_threshold_boundary() {
        assert_eq!(hit_rate_at(&[11, 100], 10).unwrap(), 0.0);
        assert_eq!(hit_rate_at(&[10, 100], 10).unwrap(), 0.5);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(mrr(&[]).is_err());
        assert!(hit_rate_at(&[], 10).is_err());
        assert!(mean_rank(&[]).is_err());
        assert!(f1_from_predictions(&[], 2).is_err());
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let a = [3, 1, 7, 2, 2, 50];
        let mut b = a;
        b.reverse();
        assert_eq!(mrr(&a).unwrap(), mrr(&b).unwrap());
        assert_eq!(hit_rate_at(&a, 10).unwrap(), hit_rate_at(&b, 10).unwrap());
        assert_eq!(mean_rank(&a).unwrap(), mean_rank(&b).unwrap());
    }

    #[test]
    fn perfect_predictions_score_one() {
        let pairs: Vec<(usize, usize)> = (0..10).map(|i| (i % 3, i % 3)).collect();
        let scores = f1_from_predictions(&pairs, 3).unwrap();
        assert_eq!(scores.micro_f1, 1.0);
        assert_eq!(scores.macro_f1, 1.0);
    }

    #[test]
    fn symmetric_confusion_gives_micro_075() {
        // two classes, each with TP=3, FP=1, FN=1
        let mut pairs = Vec::new();
        for _ in 0..3 {
            pairs.push((0, 0));
            pairs.push((1, 1));
        }
        pairs.push((0, 1));
        pairs.push((1, 0));
        let scores = f1_from_predictions(&pairs, 2).unwrap();
        assert!((scores.micro_f1 - 0.75).abs() < 1e-12);
        assert!((scores.per_class[0] - 0.75).abs() < 1e-12);
        assert!((scores.per_class[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn micro_f1_equals_accuracy_for_single_label() {
        let pairs = [(0, 0), (1, 2), (2, 2), (0, 1), (1, 1)];
        let accuracy = 3.0 / 5.0;
        let scores = f1_from_predictions(&pairs, 3).unwrap();
        assert!((scores.micro_f1 - accuracy).abs() < 1e-12);
    }
}
