//! Quantities read off θ: norm, angle, margins, accuracy, NTK feature norm.

use super::ModelState;
use crate::error::{invalid, Result};
use crate::math::linalg::norm_sq;
use crate::math::nn::argmax;
use crate::math::RngState;
use crate::tasks::Dataset;
use serde::{Deserialize, Serialize};

/// V(θ) = ‖θ‖².
pub fn param_norm_sq(state: &ModelState) -> f64 {
    norm_sq(&state.params)
}

/// Angle between two parameter vectors, in degrees.
pub fn angle_to_reference(theta: &[f64], reference: &[f64]) -> Result<f64> {
    if theta.len() != reference.len() {
        return Err(invalid("vectors differ in length"));
    }
    let (a, b) = (norm_sq(theta), norm_sq(reference));
    if a == 0.0 || b == 0.0 {
        return Err(invalid("angle undefined for a zero vector"));
    }
    // 2·atan2(‖â − b̂‖, ‖â + b̂‖) stays accurate near 0° and 180°, unlike acos.
    let (na, nb) = (a.sqrt(), b.sqrt());
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in theta.iter().zip(reference) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok((2.0 * diff.sqrt().atan2(sum.sqrt())).to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// True-class logit minus the best competing logit.
    pub margin: f64,
    /// Membership of S₋ = {Δ ≤ 0}.
    pub misclassified: bool,
}

pub fn margins_from_logits(
    logits: &[f64],
    num_classes: usize,
    labels: &[usize],
) -> Vec<MarginReport> {
    logits
        .chunks(num_classes)
        .zip(labels)
        .map(|(row, &y)| {
            let other = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != y)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let margin = row[y] - other;
            MarginReport {
                margin,
                misclassified: margin <= 0.0,
            }
        })
        .collect()
}

pub fn margins(state: &ModelState, data: &Dataset) -> Result<Vec<MarginReport>> {
    let logits = state.forward(data)?;
    Ok(margins_from_logits(&logits, data.num_classes, &data.labels))
}

/// Fraction of rows whose argmax equals the label (ties go to the lowest index).
pub fn accuracy_from_logits(logits: &[f64], num_classes: usize, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits
        .chunks(num_classes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn accuracy(state: &ModelState, data: &Dataset) -> Result<f64> {
    let logits = state.forward(data)?;
    Ok(accuracy_from_logits(
        &logits,
        data.num_classes,
        &data.labels,
    ))
}

/// ‖∇θ f(x)_y‖ for one example.
pub fn ntk_feature_norm(state: &ModelState, example: &Dataset) -> Result<f64> {
    if example.len() != 1 {
        return Err(invalid("expected a single example"));
    }
    let mut w = vec![0.0; example.num_classes];
    w[example.labels[0]] = 1.0;
    Ok(norm_sq(&state.logit_vjp(example, &w)?).sqrt())
}

/// Max of the true-class feature norm over a seeded random subset.
pub fn ntk_feature_norm_sup(
    state: &ModelState,
    data: &Dataset,
    subset_size: usize,
    seed: u64,
) -> Result<f64> {
    if subset_size == 0 || data.is_empty() {
        return Err(invalid("subset_size must be ≥ 1 on a non-empty dataset"));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    RngState::for_purpose(seed, "ntk").shuffle(&mut idx);
    idx.truncate(subset_size.min(data.len()));
    sup_feature_norm(&idx, |i| ntk_feature_norm(state, &data.subset(&[i])))
}

/// Largest feature norm over `indices`, given a per-index norm oracle.
pub fn sup_feature_norm<F>(indices: &[usize], mut norm_of: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut g: f64 = 0.0;
    for &i in indices {
        g = g.max(norm_of(i)?);
    }
    Ok(g)
}
