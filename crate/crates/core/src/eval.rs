//! Binary classification metrics and the TF-IDF cosine baseline.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::LabeledPair;
use crate::error::{Error, Result};
use crate::textpipe::{tokenize, IdfTable};

/// Accuracy, positive-class F1 and the underlying confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n: usize,
}

/// Score probability predictions against 0/1 labels; a prediction counts as
/// positive iff it reaches `threshold`.
pub fn metrics(predictions: &[f64], labels: &[u8], threshold: f64) -> Result<Metrics> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::BadMetricsInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(labels) {
        let positive = p >= threshold;
        match (positive, y) {
            (true, 1) => tp += 1,
            (true, _) => fp += 1,
            (false, 1) => fn_ += 1,
            (false, _) => tn += 1,
        }
    }
    let n = predictions.len();
    let accuracy = (tp + tn) as f64 / n as f64;
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy,
        f1,
        tp,
        fp,
        tn,
        fn_,
        n,
    })
}

// BTreeMap keeps the summation order deterministic.
fn tfidf_vector(text: &str, idf: &IdfTable) -> BTreeMap<String, f64> {
    let doc = tokenize(text);
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for token in doc.tokens {
        *counts.entry(token).or_insert(0.0) += 1.0;
    }
    for (token, tf) in counts.iter_mut() {
        *tf *= idf.idf(token);
    }
    counts
}

/// Cosine similarity of the two texts' sparse tf·idf vectors; either vector
/// zero gives 0.
pub fn tfidf_cosine_baseline(pair: &LabeledPair, idf: &IdfTable) -> f64 {
    let q = tfidf_vector(&pair.query, idf);
    let d = tfidf_vector(&pair.document, idf);
    let dot: f64 = q
        .iter()
        .filter_map(|(tok, &wq)| d.get(tok).map(|&wd| wq * wd))
        .sum();
    let nq: f64 = q.values().map(|v| v * v).sum::<f64>().sqrt();
    let nd: f64 = d.values().map(|v| v * v).sum::<f64>().sqrt();
    if nq == 0.0 || nd == 0.0 {
        0.0
    } else {
        dot / (nq * nd)
    }
}

/// Pick the accuracy-maximizing decision threshold for a score list on a
/// labeled set. Candidates are the scores themselves plus the endpoints; the
/// lowest best threshold wins ties.
pub fn best_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::BadMetricsInput);
    }
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(0.0);
    candidates.push(1.0 + f64::EPSILON);
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    candidates.dedup();

    let mut best = (0.0f64, f64::NEG_INFINITY);
    for &t in &candidates {
        let m = metrics(scores, labels, t)?;
        if m.accuracy > best.1 {
            best = (t, m.accuracy);
        }
    }
    Ok(best.0)
}
