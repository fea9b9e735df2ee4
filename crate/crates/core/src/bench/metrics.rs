//! Accuracy, pooled AUC-ROC and the all-absent baseline.

use crate::error::{Error, Result};
use crate::features::feature_labels;
use crate::graph::DirectedMixedGraph;

/// Fraction of features whose prediction matches `truth`.
pub fn accuracy(predictions: &[bool], truth: &DirectedMixedGraph) -> Result<f64> {
    let labels = feature_labels(truth);
    if labels.len() != predictions.len() {
        return Err(Error::Usage(format!(
            "{} predictions for a {}-node graph with {} features",
            predictions.len(),
            truth.n(),
            labels.len()
        )));
    }
    Ok(label_accuracy(predictions, &labels))
}

pub(crate) fn label_accuracy(predictions: &[bool], labels: &[bool]) -> f64 {
    let hits = predictions.iter().zip(labels).filter(|(p, t)| p == t).count();
    hits as f64 / labels.len() as f64
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Usage(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    // Mann-Whitney U with mid-ranks for ties
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let mut end = k + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[k]] {
            end += 1;
        }
        let mid = (k + end + 1) as f64 / 2.0;
        rank_sum += idx[k..end].iter().filter(|&&i| labels[i]).count() as f64 * mid;
        k = end;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Mean accuracy of the predictor that calls every feature absent.
pub fn weak_baseline(truths: &[DirectedMixedGraph]) -> f64 {
    if truths.is_empty() {
        return f64::NAN;
    }
    let total: f64 = truths
        .iter()
        .map(|g| {
            let labels = feature_labels(g);
            label_accuracy(&vec![false; labels.len()], &labels)
        })
        .sum();
    total / truths.len() as f64
}
