//! Summary statistics, MAPE and the percentile bootstrap.

use crate::error::{invalid, Result};
use crate::math::RngState;
use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by n).
pub fn std_pop(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// std/mean; `None` for fewer than two samples.
pub fn cv(xs: &[f64]) -> Option<f64> {
    (xs.len() >= 2).then(|| std_pop(xs) / mean(xs).abs())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileRule {
    /// Average of the two order statistics bracketing q·(n−1).
    Midpoint,
    /// Linear interpolation at q·(n−1).
    Linear,
}

pub fn quantile(xs: &[f64], q: f64, rule: QuantileRule) -> f64 {
    let v = sorted(xs);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    match rule {
        QuantileRule::Midpoint if lo == hi => v[lo],
        QuantileRule::Midpoint => 0.5 * (v[lo] + v[hi]),
        QuantileRule::Linear => v[lo] + (pos - lo as f64) * (v[hi] - v[lo]),
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5, QuantileRule::Midpoint)
}

/// Interquartile range endpoints under the midpoint rule.
pub fn iqr(xs: &[f64]) -> (f64, f64) {
    (
        quantile(xs, 0.25, QuantileRule::Midpoint),
        quantile(xs, 0.75, QuantileRule::Midpoint),
    )
}

/// Mean absolute percentage error, in percent.
pub fn mape(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() || predicted.is_empty() {
        return Err(invalid("mape needs equal, non-empty lists"));
    }
    if observed.iter().any(|&o| o == 0.0) {
        return Err(invalid("mape undefined for a zero observation"));
    }
    Ok(100.0
        * mean(
            &predicted
                .iter()
                .zip(observed)
                .map(|(p, o)| ((p - o) / o).abs())
                .collect::<Vec<_>>(),
        ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
}

impl Statistic {
    pub fn apply(self, xs: &[f64]) -> f64 {
        match self {
            Statistic::Mean => mean(xs),
            Statistic::Median => median(xs),
        }
    }
}

/// Percentile bootstrap 95% interval (2.5/97.5 linear-interpolated percentiles).
pub fn bootstrap_ci(
    samples: &[f64],
    stat: Statistic,
    n_resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples.len() < 2 || n_resamples == 0 {
        return Err(invalid("bootstrap needs ≥ 2 samples and ≥ 1 resample"));
    }
    let mut rng = RngState::for_purpose(seed, "bootstrap");
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let stats: Vec<f64> = (0..n_resamples)
        .map(|_| {
            buf.iter_mut().for_each(|b| *b = samples[rng.below(n)]);
            stat.apply(&buf)
        })
        .collect();
    Ok((
        quantile(&stats, 0.025, QuantileRule::Linear),
        quantile(&stats, 0.975, QuantileRule::Linear),
    ))
}
