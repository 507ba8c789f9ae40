//! Yaw fluctuation score.
//!
//! For a prototype view with logits `l*` over `n` classes, take the ten
//! classes with the largest prototype logits. The score is the sum over yaw
//! views `y` of `|l*_10 - l^y_10|_2 / s(l*)`, where `s` is the population
//! standard deviation of all `n` prototype logits.

use crate::error::{Error, Result};

use super::prediction::ranking;

pub const TOP_CLASSES: usize = 10;

/// Population standard deviation, two-pass in f64.
pub fn population_std(values: &[f32]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    (values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Indices of the ten largest prototype logits (ties by index).
pub fn top_classes(prototype: &[f32]) -> Vec<usize> {
    ranking(prototype).into_iter().take(TOP_CLASSES).collect()
}

pub fn fluctuation_score(prototype: &[f32], views: &[Vec<f32>]) -> Result<f64> {
    let n = prototype.len();
    if n < TOP_CLASSES {
        return Err(Error::shape(format!("need at least {TOP_CLASSES} logits, got {n}")));
    }
    if let Some(v) = views.iter().find(|v| v.len() != n) {
        return Err(Error::shape(format!("view has {} logits, prototype has {n}", v.len())));
    }
    let s = population_std(prototype);
    if !(s > 0.0) {
        return Err(Error::ZeroDeviation);
    }
    let top = top_classes(prototype);
    let total: f64 = views
        .iter()
        .map(|view| {
            top.iter()
                .map(|&c| (prototype[c] as f64 - view[c] as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / s)
}
