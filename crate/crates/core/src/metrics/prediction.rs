use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub class: usize,
    pub label: String,
    pub logit: f32,
    pub probability: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model_id: String,
    pub logits: Vec<f32>,
    pub probabilities: Vec<f32>,
    /// Sorted by descending logit, ties by ascending class index.
    pub top: Vec<TopEntry>,
    /// Display hint: show probabilities rather than logits.
    pub as_probability: bool,
}

/// Softmax with max subtraction, accumulated in f64.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / total) as f32).collect()
}

/// Class indices ordered by descending value; equal values keep index order.
pub fn ranking(values: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

pub fn topk(model_id: &str, labels: &[String], logits: &[f32], k: usize, as_probability: bool) -> Result<PredictionSet> {
    if k > logits.len() {
        return Err(Error::param("k", format!("k = {k} exceeds {} classes", logits.len())));
    }
    if labels.len() != logits.len() {
        return Err(Error::shape(format!("{} labels for {} logits", labels.len(), logits.len())));
    }
    let probabilities = softmax(logits);
    let top = ranking(logits)
        .into_iter()
        .take(k)
        .map(|class| TopEntry {
            class,
            label: labels[class].clone(),
            logit: logits[class],
            probability: probabilities[class],
        })
        .collect();
    Ok(PredictionSet {
        model_id: model_id.to_string(),
        logits: logits.to_vec(),
        probabilities,
        top,
        as_probability,
    })
}
