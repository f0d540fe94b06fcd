//! ROC curves and AUROC.
//!
//! Scores are oriented so that larger means more likely aged/recycled; the
//! aged group is the positive class. The decision rule behind every point
//! is `recycled iff score >= cut`.

use crate::error::{Error, Result};
use crate::stats::check_finite;

#[derive(Debug, Clone, serde::Serialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    /// Tied scores across the two groups produce diagonal segments.
    pub points: Vec<(f64, f64)>,
    /// Trapezoidal area under the curve.
    pub auroc: f64,
}

/// Build the ROC curve of `aged_scores` (positives) against `new_scores`
/// (negatives).
///
/// The area is computed twice, by trapezoidal integration of the curve and
/// by pairwise comparison P(aged > new) + P(aged = new)/2; the two must
/// agree to 1e-9 or the call panics, since a disagreement means a bug in
/// one of the routes rather than bad data.
pub fn roc(new_scores: &[f64], aged_scores: &[f64]) -> Result<RocCurve> {
    if new_scores.is_empty() || aged_scores.is_empty() {
        return Err(Error::Contract("roc needs both score groups non-empty".into()));
    }
    check_finite(new_scores)?;
    check_finite(aged_scores)?;

    // Pool scores with labels, sweep cuts from +inf downward.
    let mut pool: Vec<(f64, bool)> = new_scores
        .iter()
        .map(|&s| (s, false))
        .chain(aged_scores.iter().map(|&s| (s, true)))
        .collect();
    pool.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));

    let (nn, na) = (new_scores.len() as f64, aged_scores.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut idx = 0;
    while idx < pool.len() {
        let cut = pool[idx].0;
        // Take the whole tie group at once so ties become one diagonal step.
        while idx < pool.len() && pool[idx].0 == cut {
            if pool[idx].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        points.push((fp as f64 / nn, tp as f64 / na));
    }

    let mut area = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }

    let pairwise = auroc_pairwise(new_scores, aged_scores);
    assert!(
        (area - pairwise).abs() <= 1e-9,
        "AUROC routes disagree: trapezoid {area} vs pairwise {pairwise}"
    );
    Ok(RocCurve { points, auroc: area })
}

/// AUROC as the Mann-Whitney probability P(aged > new) + P(tie)/2,
/// computed from average ranks in O(n log n).
pub fn auroc_pairwise(new_scores: &[f64], aged_scores: &[f64]) -> f64 {
    let mut pool: Vec<(f64, bool)> = new_scores
        .iter()
        .map(|&s| (s, false))
        .chain(aged_scores.iter().map(|&s| (s, true)))
        .collect();
    pool.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_aged = 0.0;
    let mut i = 0;
    while i < pool.len() {
        let mut j = i;
        while j < pool.len() && pool[j].0 == pool[i].0 {
            j += 1;
        }
        // 1-based average rank of the tie group [i, j).
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &pool[i..j] {
            if item.1 {
                rank_sum_aged += avg_rank;
            }
        }
        i = j;
    }
    let na = aged_scores.len() as f64;
    let nn = new_scores.len() as f64;
    (rank_sum_aged - na * (na + 1.0) / 2.0) / (na * nn)
}

/// Youden's informedness: TPR + TNR - 1.
pub fn informedness(tpr: f64, tnr: f64) -> f64 {
    tpr + tnr - 1.0
}

/// Informedness from confusion counts. Each class must be represented,
/// otherwise its rate is undefined.
pub fn informedness_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Result<f64> {
    if tp + fn_ == 0 {
        return Err(Error::Contract("no positive examples".into()));
    }
    if tn + fp == 0 {
        return Err(Error::Contract("no negative examples".into()));
    }
    let tpr = tp as f64 / (tp + fn_) as f64;
    let tnr = tn as f64 / (tn + fp) as f64;
    Ok(informedness(tpr, tnr))
}

/// Standard deviation of AUROC for a label-shuffling null with group sizes
/// `n_new` and `n_aged` (normal approximation to the Mann-Whitney null).
pub fn auroc_null_std(n_new: usize, n_aged: usize) -> f64 {
    let (m, n) = (n_new as f64, n_aged as f64);
    ((m + n + 1.0) / (12.0 * m * n)).sqrt()
}
