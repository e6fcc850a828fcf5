//! Evaluation metrics for time-series anomaly detection.
//!
//! Scores are real-valued with higher meaning more anomalous; labels are
//! per-timestamp {0,1}. The module provides threshold-free ranking metrics
//! (AUC-ROC via the rank statistic with half credit for ties, AUC-PR as
//! average precision over the exact threshold set), confusion-based
//! precision/recall/F1 with a zero-denominator-maps-to-zero convention,
//! the point-adjustment convention for segment-level credit, and an exact
//! best-F1 threshold search over all unique score values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of a binary confusion table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

/// Precision/recall/F1 at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation record for one scored test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub auc_roc: f64,
    pub auc_pr: f64,
    /// Best raw F1 and its components.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Best point-adjusted F1 and its components.
    pub precision_adj: f64,
    pub recall_adj: f64,
    pub f1_adj: f64,
    /// Threshold achieving the best raw F1.
    pub threshold: f64,
    /// Threshold achieving the best adjusted F1.
    pub threshold_adj: f64,
    /// Filled by the runner to tie the result to its configuration.
    pub config_fingerprint: String,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Format(format!(
            "length mismatch: {a} scores/predictions vs {b} labels"
        )));
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

/// Area under the ROC curve: the probability that a random positive
/// outranks a random negative, counting ties as half.
///
/// Computed as the Mann–Whitney rank statistic with midranks for ties.
///
/// # Errors
/// Single-class labels make the metric undefined.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC-ROC needs both classes present".into(),
        ));
    }

    // Sort indices by score; assign midranks within tie groups.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &ix in &order[i..j] {
            if labels[ix] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve in the average-precision form:
/// `Σ_k (R_k − R_{k−1}) · P_k` over thresholds descending through the
/// unique score values.
///
/// # Errors
/// Undefined when no positive labels exist.
pub fn auc_pr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let (pos, _) = class_counts(labels);
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "AUC-PR needs at least one positive label".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Admit the whole tie group at once: thresholds between tied scores
        // do not exist.
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            tp += usize::from(labels[order[j]] == 1);
            predicted += 1;
            j += 1;
        }
        let precision = tp as f64 / predicted as f64;
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Confusion counts of binary predictions against labels.
pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    check_lengths(preds.len(), labels.len())?;
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// Precision, recall, and F1 from confusion counts.
///
/// Precision = TP/(TP+FP), Recall = TP/(TP+FN),
/// F1 = 2·P·R/(P+R); any zero denominator yields 0.
pub fn precision_recall_f1(c: &ConfusionCounts) -> (f64, f64, f64) {
    let precision = if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Point adjustment: any hit inside a maximal run of positive labels marks
/// the entire run as detected. Predictions outside labeled runs are kept.
pub fn point_adjust(preds: &[u8], labels: &[u8]) -> Result<Vec<u8>> {
    check_lengths(preds.len(), labels.len())?;
    let mut out = preds.to_vec();
    let n = labels.len();
    let mut i = 0;
    while i < n {
        if labels[i] == 1 {
            let mut j = i;
            while j < n && labels[j] == 1 {
                j += 1;
            }
            if preds[i..j].contains(&1) {
                out[i..j].fill(1);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    Ok(out)
}

/// Exhaustive best-F1 threshold search.
///
/// Candidates are the unique score values plus +∞ (predict nothing);
/// predictions are `score ≥ θ`. With `adjusted`, point adjustment is applied
/// before counting. F1 ties break toward the larger threshold.
pub fn best_f1_threshold(scores: &[f64], labels: &[u8], adjusted: bool) -> Result<ThresholdMetrics> {
    check_lengths(scores.len(), labels.len())?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "threshold search needs both classes present".into(),
        ));
    }

    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.push(f64::INFINITY);

    let mut best: Option<ThresholdMetrics> = None;
    for &theta in &candidates {
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= theta)).collect();
        let effective = if adjusted {
            point_adjust(&preds, labels)?
        } else {
            preds
        };
        let counts = confusion(&effective, labels)?;
        let (precision, recall, f1) = precision_recall_f1(&counts);
        // >= keeps the later (larger) threshold on ties.
        if best.as_ref().is_none_or(|b| f1 >= b.f1) {
            best = Some(ThresholdMetrics {
                threshold: theta,
                precision,
                recall,
                f1,
            });
        }
    }
    Ok(best.expect("candidate list is never empty"))
}

/// Evaluate a score series completely: both ranking metrics plus raw and
/// point-adjusted best-F1 searches.
pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<EvaluationResult> {
    let raw = best_f1_threshold(scores, labels, false)?;
    let adj = best_f1_threshold(scores, labels, true)?;
    Ok(EvaluationResult {
        auc_roc: auc_roc(scores, labels)?,
        auc_pr: auc_pr(scores, labels)?,
        precision: raw.precision,
        recall: raw.recall,
        f1: raw.f1,
        precision_adj: adj.precision,
        recall_adj: adj.recall,
        f1_adj: adj.f1,
        threshold: raw.threshold,
        threshold_adj: adj.threshold,
        config_fingerprint: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn auc_roc_perfect_ranking() {
        let v = auc_roc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_all_ties_is_half() {
        let v = auc_roc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_interleaved_case() {
        // Pairs: (0.1 vs 0.2) lost, (0.1 vs 0.8) lost, (0.9 vs 0.2) won,
        // (0.9 vs 0.8) won -> 2/4.
        let v = auc_roc(&[0.1, 0.9, 0.2, 0.8], &[1, 1, 0, 0]).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_matches_pairwise_counting_on_random_inputs() {
        // Independent O(n²) oracle: count wins + half-ties over all
        // positive/negative pairs.
        let mut rng = crate::rng::derive(21, "auc-oracle", &[]);
        for case in 0..50 {
            let n = rng.random_range(4..40);
            let scores: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.random_range(0..8)) / 7.0)
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;

            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..n {
                if labels[i] != 1 {
                    continue;
                }
                for j in 0..n {
                    if labels[j] != 0 {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
            let expect = wins / pairs;
            let got = auc_roc(&scores, &labels).unwrap();
            assert!((got - expect).abs() < 1e-12, "case {case}");
        }
    }

    #[test]
    fn auc_roc_rejects_single_class() {
        assert!(matches!(
            auc_roc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auc_pr_perfect_and_constant() {
        assert!((auc_pr(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap() - 1.0).abs() < 1e-12);
        // All scores equal: single threshold, precision = positive rate.
        let v = auc_pr(&[0.5; 4], &[1, 0, 0, 0]).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn auc_pr_interleaved_case() {
        // Thresholds descending 0.9, 0.8, 0.2, 0.1:
        // P=1,R=.5 | P=.5,R=.5 | P=1/3,R=.5 | P=.5,R=1 -> AP = .5 + .25.
        let v = auc_pr(&[0.1, 0.9, 0.2, 0.8], &[1, 1, 0, 0]).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_pr_needs_a_positive() {
        assert!(auc_pr(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 0, 0, 1));

        let c = confusion(&[0, 0, 0], &[1, 0, 1]).unwrap();
        assert_eq!((c.tp, c.fp), (0, 0));

        let c = confusion(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 1, 1));
    }

    #[test]
    fn prf_arithmetic_and_conventions() {
        let (p, r, f1) = precision_recall_f1(&ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 0,
        });
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);

        let zero = precision_recall_f1(&ConfusionCounts {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 5,
        });
        assert_eq!(zero, (0.0, 0.0, 0.0));

        let perfect = precision_recall_f1(&ConfusionCounts {
            tp: 4,
            fp: 0,
            fn_: 0,
            tn: 4,
        });
        assert_eq!(perfect, (1.0, 1.0, 1.0));
    }

    #[test]
    fn point_adjust_marks_whole_runs() {
        let adj = point_adjust(&[0, 0, 1, 0, 0], &[0, 1, 1, 1, 0]).unwrap();
        assert_eq!(adj, vec![0, 1, 1, 1, 0]);

        // No hit anywhere: unchanged.
        let adj = point_adjust(&[0, 0, 0, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(adj, vec![0, 0, 0, 0]);

        // Hit in the first run only; second run stays missed.
        let adj = point_adjust(&[1, 0, 0, 0], &[1, 1, 0, 1]).unwrap();
        assert_eq!(adj, vec![1, 1, 0, 0]);

        // False positives outside runs are preserved.
        let adj = point_adjust(&[1, 0, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(adj, vec![1, 1, 1, 0]);
    }

    #[test]
    fn point_adjust_is_idempotent_and_monotone() {
        let mut rng = crate::rng::derive(9, "pa-prop", &[]);
        for _ in 0..60 {
            let n = rng.random_range(1..30);
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            let preds: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            let once = point_adjust(&preds, &labels).unwrap();
            let twice = point_adjust(&once, &labels).unwrap();
            assert_eq!(once, twice);
            // Never flips a predicted 1 to 0.
            for (o, p) in once.iter().zip(&preds) {
                assert!(o >= p);
            }
        }
    }

    #[test]
    fn best_f1_separable_scores() {
        let m = best_f1_threshold(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0], false).unwrap();
        assert_eq!(m.f1, 1.0);
        // Ties toward larger θ: both 0.8 and 0.9 give F1 < 1 only above 0.8?
        // θ = 0.8 predicts exactly the positives. θ = 0.9 misses one.
        assert_eq!(m.threshold, 0.8);
    }

    #[test]
    fn best_f1_matches_brute_force_scan() {
        let mut rng = crate::rng::derive(31, "f1-oracle", &[]);
        for case in 0..50 {
            let n = rng.random_range(4..25);
            let scores: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.random_range(0..6)) / 5.0)
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;

            for adjusted in [false, true] {
                // Oracle: scan the same candidate set by brute force,
                // tracking the max; ties go to the larger threshold.
                let mut cands: Vec<f64> = scores.clone();
                cands.sort_by(f64::total_cmp);
                cands.dedup();
                cands.push(f64::INFINITY);
                let mut best_f1 = -1.0;
                let mut best_theta = f64::NAN;
                for &theta in &cands {
                    let preds: Vec<u8> =
                        scores.iter().map(|&s| u8::from(s >= theta)).collect();
                    let preds = if adjusted {
                        point_adjust(&preds, &labels).unwrap()
                    } else {
                        preds
                    };
                    let (_, _, f1) = precision_recall_f1(&confusion(&preds, &labels).unwrap());
                    if f1 >= best_f1 {
                        best_f1 = f1;
                        best_theta = theta;
                    }
                }
                let got = best_f1_threshold(&scores, &labels, adjusted).unwrap();
                assert!((got.f1 - best_f1).abs() < 1e-12, "case {case}");
                assert_eq!(got.threshold, best_theta, "case {case}");
            }
        }
    }

    #[test]
    fn adjusted_f1_never_below_raw_at_same_threshold() {
        let mut rng = crate::rng::derive(15, "adj-prop", &[]);
        for _ in 0..40 {
            let n = rng.random_range(5..30);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            for &theta in scores.iter() {
                let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= theta)).collect();
                let adj = point_adjust(&preds, &labels).unwrap();
                let (_, _, f_raw) = precision_recall_f1(&confusion(&preds, &labels).unwrap());
                let (_, _, f_adj) = precision_recall_f1(&confusion(&adj, &labels).unwrap());
                assert!(f_adj >= f_raw - 1e-15);
            }
        }
    }

    #[test]
    fn monotone_transform_leaves_ranking_metrics_unchanged() {
        let mut rng = crate::rng::derive(4, "mono-prop", &[]);
        let n = 40;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        let squashed: Vec<f64> = scores.iter().map(|&s| (3.0 * s).exp()).collect();

        let a1 = auc_roc(&scores, &labels).unwrap();
        let a2 = auc_roc(&squashed, &labels).unwrap();
        assert!((a1 - a2).abs() < 1e-12);
        let p1 = auc_pr(&scores, &labels).unwrap();
        let p2 = auc_pr(&squashed, &labels).unwrap();
        assert!((p1 - p2).abs() < 1e-12);
        let f1 = best_f1_threshold(&scores, &labels, false).unwrap();
        let f2 = best_f1_threshold(&squashed, &labels, false).unwrap();
        assert!((f1.f1 - f2.f1).abs() < 1e-12);
        // The winning threshold maps through the same transform.
        assert!((f2.threshold - (3.0 * f1.threshold).exp()).abs() < 1e-9);
    }

    #[test]
    fn shuffled_labels_average_near_half() {
        use rand::seq::SliceRandom;
        let mut rng = crate::rng::derive(2, "shuffle-prop", &[]);
        let n = 60;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let mut total = 0.0;
        let trials = 200;
        for _ in 0..trials {
            labels.shuffle(&mut rng);
            total += auc_roc(&scores, &labels).unwrap();
        }
        let mean = total / f64::from(trials);
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn evaluate_is_internally_consistent() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.65, 0.2];
        let labels = [0, 0, 1, 1, 1, 0];
        let e = evaluate(&scores, &labels).unwrap();
        // F1 consistent with its own precision/recall.
        let expect_f1 = 2.0 * e.precision * e.recall / (e.precision + e.recall);
        assert!((e.f1 - expect_f1).abs() < 1e-9);
        assert!(e.f1_adj >= e.f1 - 1e-15);
        assert!(e.auc_roc >= 0.0 && e.auc_roc <= 1.0);
        assert!(e.auc_pr >= 0.0 && e.auc_pr <= 1.0);
    }
}
