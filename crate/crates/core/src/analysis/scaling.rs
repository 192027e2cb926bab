//! Log-log power laws with bootstrap exponent intervals, and the post-grok overshoot metrics.

use super::stats::{quantile, QuantileRule};
use crate::error::{invalid, Error, Result};
use crate::math::{least_squares_line, LineFit, RngState};
use crate::trainer::{RunSummary, TrajectoryLog};
use serde::{Deserialize, Serialize};

/// `y = a·x^b` fitted by OLS in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    /// Coefficient of determination in log-log space.
    pub r_squared: f64,
    pub n: usize,
    pub b_ci95: Option<(f64, f64)>,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x.powf(self.b)
    }
}

fn log_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(invalid("power law needs ≥ 3 paired points"));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !(**v > 0.0)) {
        return Err(invalid(format!("power law needs positive values, got {v}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    least_squares_line(&lx, &ly)
}

/// Case-resampling percentile bootstrap for the exponent; resamples with a single
/// distinct x are redrawn. `n_bootstrap = 0` skips the interval.
pub fn power_law_fit(x: &[f64], y: &[f64], n_bootstrap: usize, seed: u64) -> Result<PowerLawFit> {
    let line = log_line(x, y)?;
    let b_ci95 = if n_bootstrap > 0 {
        let mut rng = RngState::for_purpose(seed, "bootstrap");
        let n = x.len();
        let mut bs = Vec::with_capacity(n_bootstrap);
        let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
        let mut attempts = 0usize;
        while bs.len() < n_bootstrap {
            attempts += 1;
            if attempts > 100 * n_bootstrap {
                return Err(Error::DegenerateAbscissa);
            }
            for j in 0..n {
                let i = rng.below(n);
                xs[j] = x[i];
                ys[j] = y[i];
            }
            if xs.iter().all(|&v| v == xs[0]) {
                continue;
            }
            bs.push(log_line(&xs, &ys)?.slope);
        }
        Some((
            quantile(&bs, 0.025, QuantileRule::Linear),
            quantile(&bs, 0.975, QuantileRule::Linear),
        ))
    } else {
        None
    };
    Ok(PowerLawFit {
        a: line.intercept.exp(),
        b: line.slope,
        r_squared: line.r_squared,
        n: x.len(),
        b_ci95,
    })
}

/// Power-law and linear fits on the same points, reported side by side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingComparison {
    pub power: PowerLawFit,
    pub linear: LineFit,
}

pub fn compare_scaling_forms(
    x: &[f64],
    y: &[f64],
    n_bootstrap: usize,
    seed: u64,
) -> Result<ScalingComparison> {
    Ok(ScalingComparison {
        power: power_law_fit(x, y, n_bootstrap, seed)?,
        linear: least_squares_line(x, y)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootMetrics {
    pub v_at_t95: f64,
    /// V_min,post / V(T_grok 0.95).
    pub rho_drop: f64,
    pub v_min_post: f64,
    pub v_max_post: f64,
    /// Largest V after the post-grok minimum, over that minimum.
    pub regrowth_factor: f64,
    /// (T99 − T95)/(T95 − T_mem); absent when T99 or T_mem is missing or T95 = T_mem.
    pub extra_delay_ratio: Option<f64>,
    pub flags: Vec<String>,
}

pub fn overshoot_metrics(log: &TrajectoryLog, summary: &RunSummary) -> Result<OvershootMetrics> {
    let t95 = summary
        .t_grok_95
        .ok_or_else(|| invalid("T_grok(0.95) absent"))?;
    let post: Vec<f64> = log
        .rows
        .iter()
        .filter(|r| r.step >= t95)
        .map(|r| r.v)
        .collect();
    let v_at_t95 = *post
        .first()
        .ok_or_else(|| invalid("no logged rows after T_grok(0.95)"))?;
    let (imin, &v_min_post) = post
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v_max_post = post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let regrowth_factor = post[imin..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        / v_min_post;
    let mut flags = Vec::new();
    let extra_delay_ratio = match (summary.t_grok_99, summary.t_mem) {
        (Some(t99), Some(tm)) if t95 > tm => Some((t99 as f64 - t95 as f64) / (t95 - tm) as f64),
        (None, _) => {
            flags.push("T_grok(0.99) absent".into());
            None
        }
        (_, None) => {
            flags.push("T_mem absent".into());
            None
        }
        _ => {
            flags.push("T_grok(0.95) = T_mem".into());
            None
        }
    };
    Ok(OvershootMetrics {
        v_at_t95,
        rho_drop: v_min_post / v_at_t95,
        v_min_post,
        v_max_post,
        regrowth_factor,
        extra_delay_ratio,
        flags,
    })
}

/// `extra_delay_ratio = a·rho_drop^b` over runs given as (rho_drop, ratio).
pub fn fit_overshoot_law(
    runs: &[(f64, f64)],
    n_bootstrap: usize,
    seed: u64,
) -> Result<PowerLawFit> {
    if runs.len() < 5 {
        return Err(invalid(format!(
            "overshoot law needs ≥ 5 runs, got {}",
            runs.len()
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = runs.iter().copied().unzip();
    power_law_fit(&x, &y, n_bootstrap, seed)
}
