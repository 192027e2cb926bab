use crate::error::{Error, Result};

/// Stabiliser inside [`layer_norm`].
pub const LN_EPS: f64 = 1e-5;

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy over rows of a row-major `labels.len() × num_classes` logit matrix.
///
/// Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy_loss(
    logits: &[f64],
    num_classes: usize,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() * num_classes {
        return Err(Error::InvalidInput(format!(
            "logit buffer of length {} does not match {} rows × {} classes",
            logits.len(),
            labels.len(),
            num_classes
        )));
    }
    let n = labels.len() as f64;
    let mut grad = logits.to_vec();
    let mut loss = 0.0;
    for (row, &y) in grad.chunks_exact_mut(num_classes).zip(labels) {
        if y >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes,
            });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / n;
        }
        row[y] -= 1.0 / n;
    }
    Ok((loss / n, grad))
}

/// Cross-entropy without the gradient; used on evaluation sets.
pub fn cross_entropy_value(logits: &[f64], num_classes: usize, labels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (row, &y) in logits.chunks_exact(num_classes).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
    }
    loss / labels.len() as f64
}

/// `gamma ⊙ (x − mean) / sqrt(var + LN_EPS) + beta` on a single vector.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| g * (v - mean) * inv + b)
        .collect()
}

/// Index of the largest entry; ties resolve to the first.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
