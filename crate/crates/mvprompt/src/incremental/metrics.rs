//! Multi-label ranking and classification metrics: mAP, CF1, OF1.
//!
//! Average precision ranks test samples per class by score, descending, with
//! ties broken by sample index (stable), and averages precision@rank over the
//! positive instances. Classes with zero positives are excluded from the mAP
//! and CF1 means with a logged count. The positive-prediction threshold is
//! 0.5 inclusive.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const POSITIVE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClassificationMetrics {
    /// Mean average precision over classes with >= 1 positive.
    pub map: f64,
    /// Per-class (macro) F1 averaged over classes with >= 1 positive.
    pub cf1: f64,
    /// Overall (micro) F1 over all sample-class pairs.
    pub of1: f64,
    /// Classes excluded from map/cf1 for having zero positives.
    pub skipped_classes: usize,
}

/// Average precision for one class. `None` when the class has no positives.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Option<f64> {
    debug_assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must be comparable")
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, &i) in order.iter().enumerate() {
        if labels[i] == 1.0 {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// mAP, CF1, OF1 for a samples x classes score matrix against binary labels.
pub fn classification_metrics(scores: &Matrix, labels: &Matrix) -> Result<ClassificationMetrics> {
    if scores.rows() != labels.rows() || scores.cols() != labels.cols() {
        return Err(Error::Shape(format!(
            "scores {}x{} vs labels {}x{}",
            scores.rows(),
            scores.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    if scores.rows() == 0 || scores.cols() == 0 {
        return Err(Error::Validation("empty score matrix".into()));
    }
    if !scores.all_finite() {
        return Err(Error::NonFinite("metric scores".into()));
    }
    let n = scores.rows();
    let c = scores.cols();

    let mut ap_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut scored_classes = 0usize;
    let mut micro_tp = 0usize;
    let mut micro_fp = 0usize;
    let mut micro_fn = 0usize;

    let mut col_scores = vec![0.0; n];
    let mut col_labels = vec![0.0; n];
    for class in 0..c {
        for i in 0..n {
            col_scores[i] = scores.get(i, class);
            col_labels[i] = labels.get(i, class);
        }
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fneg = 0usize;
        for i in 0..n {
            let predicted = col_scores[i] >= POSITIVE_THRESHOLD;
            let actual = col_labels[i] == 1.0;
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        micro_tp += tp;
        micro_fp += fp;
        micro_fn += fneg;
        if let Some(ap) = average_precision(&col_scores, &col_labels) {
            ap_sum += ap;
            let denom = 2 * tp + fp + fneg;
            f1_sum += if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            };
            scored_classes += 1;
        }
    }

    if scored_classes == 0 {
        return Err(Error::Validation(
            "every class has zero positives; mAP is undefined".into(),
        ));
    }
    let micro_denom = 2 * micro_tp + micro_fp + micro_fn;
    Ok(ClassificationMetrics {
        map: ap_sum / scored_classes as f64,
        cf1: f1_sum / scored_classes as f64,
        of1: if micro_denom == 0 {
            0.0
        } else {
            2.0 * micro_tp as f64 / micro_denom as f64
        },
        skipped_classes: c - scored_classes,
    })
}
