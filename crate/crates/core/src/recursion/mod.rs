//! Neural-free checks of the norm-contraction recursion `V' = (1−ηλ)²V + R`.

#[cfg(test)]
mod tests;

use crate::error::{invalid, Result};
use crate::math::linalg::norm_sq;
use crate::math::RngState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderPolicy {
    Zero,
    /// `R = +bound`.
    MaxPositive,
    /// `R = −bound`.
    MaxNegative,
    /// Uniform magnitude in `[0, bound]` with a random sign.
    RandomSign,
}

impl RemainderPolicy {
    pub const ALL: [RemainderPolicy; 4] = [
        RemainderPolicy::Zero,
        RemainderPolicy::MaxPositive,
        RemainderPolicy::MaxNegative,
        RemainderPolicy::RandomSign,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionConfig {
    pub v0: f64,
    pub eta: f64,
    pub lambda: f64,
    pub c1: f64,
    pub policy: RemainderPolicy,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
}

impl RecursionConfig {
    pub fn new(
        v0: f64,
        eta: f64,
        lambda: f64,
        c1: f64,
        policy: RemainderPolicy,
        horizon: u64,
    ) -> Self {
        RecursionConfig {
            v0,
            eta,
            lambda,
            c1,
            policy,
            horizon,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) {
            return Err(invalid("V0 must be positive"));
        }
        if !(self.eta > 0.0 && self.lambda > 0.0 && self.eta * self.lambda < 1.0) {
            return Err(invalid(format!(
                "need η, λ > 0 and ηλ < 1, got η={} λ={}",
                self.eta, self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.c1) {
            return Err(invalid(format!("c1 must lie in [0, 1), got {}", self.c1)));
        }
        Ok(())
    }

    /// Largest admissible |R| at norm `v`.
    pub fn remainder_bound(&self, v: f64) -> f64 {
        let (e, l, c) = (self.eta, self.lambda, self.c1);
        (2.0 * c * e * e * l + c * c * e.powi(4) * l * l) * v
    }

    pub fn contraction(&self) -> f64 {
        (1.0 - self.eta * self.lambda).powi(2)
    }
}

/// `V_0 … V_horizon`.
pub fn simulate_contraction(cfg: &RecursionConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = RngState::for_purpose(cfg.seed, "remainder");
    let a = cfg.contraction();
    let mut v = cfg.v0;
    let mut out = Vec::with_capacity(cfg.horizon as usize + 1);
    out.push(v);
    for _ in 0..cfg.horizon {
        let b = cfg.remainder_bound(v);
        let r = match cfg.policy {
            RemainderPolicy::Zero => 0.0,
            RemainderPolicy::MaxPositive => b,
            RemainderPolicy::MaxNegative => -b,
            RemainderPolicy::RandomSign => {
                let m = b * rng.uniform();
                if rng.coin() {
                    m
                } else {
                    -m
                }
            }
        };
        v = a * v + r;
        out.push(v);
    }
    Ok(out)
}

/// First index with `V ≤ target`.
pub fn crossing_time(series: &[f64], v_target: f64) -> Option<u64> {
    series.iter().position(|&v| v <= v_target).map(|i| i as u64)
}

/// The clean-rate estimate `ln(V0/V_target)/(2ηλ)`.
pub fn predicted_crossing(v0: f64, v_target: f64, eta: f64, lambda: f64) -> f64 {
    (v0 / v_target).ln() / (2.0 * eta * lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityVerdict {
    /// Steps for V to fall from V_mem to V_post; 0 when V_mem ≤ V_post.
    pub delay: Option<u64>,
    pub predicted_delay: f64,
    /// max V over the simulated trajectory divided by V_post.
    pub max_v_over_post: f64,
    pub holds: bool,
}

/// Starting from V_mem, a contracting trajectory either never exceeds V_post (no delay)
/// or needs a positive crossing time to reach it.
pub fn necessity_check(v_mem: f64, v_post: f64, cfg: &RecursionConfig) -> Result<NecessityVerdict> {
    if !(v_mem > 0.0 && v_post > 0.0) {
        return Err(invalid("V_mem and V_post must be positive"));
    }
    let series = simulate_contraction(&RecursionConfig { v0: v_mem, ..*cfg })?;
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delay = crossing_time(&series, v_post);
    let holds = if v_mem <= v_post {
        max <= v_post && delay == Some(0)
    } else {
        delay.is_some_and(|d| d > 0)
    };
    Ok(NecessityVerdict {
        delay,
        predicted_delay: predicted_crossing(v_mem, v_post, cfg.eta, cfg.lambda).max(0.0),
        max_v_over_post: max / v_post,
        holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KossonSim {
    pub series: Vec<f64>,
    pub steps: u64,
    pub converged: bool,
    pub fixed_point: f64,
    /// `η²C / (1 − (1−ηλ)²)`, evaluated as `η²C / (2ηλ − (ηλ)²)`.
    pub exact: f64,
    /// `ηC / (2λ)`.
    pub approx: f64,
}

/// Iterates `V' = (1−ηλ)²V + η²C` until a step changes V by at most one ulp.
pub fn simulate_kosson(
    v0: f64,
    eta: f64,
    lambda: f64,
    c_dim: f64,
    max_steps: u64,
) -> Result<KossonSim> {
    RecursionConfig::new(v0, eta, lambda, 0.0, RemainderPolicy::Zero, 0).validate()?;
    if !(c_dim > 0.0) {
        return Err(invalid("C must be positive"));
    }
    let a = (1.0 - eta * lambda).powi(2);
    let b = eta * eta * c_dim;
    let mut series = vec![v0];
    let mut v = v0;
    let mut converged = false;
    for _ in 0..max_steps {
        let next = a * v + b;
        series.push(next);
        let done = (next - v).abs() <= f64::EPSILON * next.abs();
        v = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(KossonSim {
        steps: series.len() as u64 - 1,
        series,
        converged,
        fixed_point: v,
        exact: b / (2.0 * eta * lambda - (eta * lambda).powi(2)),
        approx: eta * c_dim / (2.0 * lambda),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePreservation {
    /// max_t |Δ ln V_t − Δ ln D_t|.
    pub max_gap: f64,
    /// max_t ‖θ_post‖/‖θ_t‖.
    pub max_eps: f64,
    /// max_t gap_t / (ηλ·ε_t); absent when θ_post = 0.
    pub k_fit: Option<f64>,
}

/// Compares the log-slopes of `V_t = ‖θ_t‖²` and `D_t = ‖θ_t − θ_post‖²`.
pub fn rate_preservation_check(
    series: &[Vec<f64>],
    theta_post: &[f64],
    eta_lambda: f64,
) -> Result<RatePreservation> {
    if series.len() < 2 {
        return Err(invalid("need at least two iterates"));
    }
    let vp = norm_sq(theta_post);
    let mut out = RatePreservation {
        max_gap: 0.0,
        max_eps: 0.0,
        k_fit: None,
    };
    let vd = |th: &[f64]| -> Result<(f64, f64)> {
        if th.len() != theta_post.len() {
            return Err(invalid("iterate length differs from θ_post"));
        }
        let v = norm_sq(th);
        if v <= vp {
            return Err(invalid("‖θ_t‖ must exceed ‖θ_post‖ throughout"));
        }
        Ok((
            v,
            th.iter()
                .zip(theta_post)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        ))
    };
    let mut prev = vd(&series[0])?;
    for th in &series[1..] {
        let cur = vd(th)?;
        let gap = ((cur.0 / prev.0).ln() - (cur.1 / prev.1).ln()).abs();
        let eps = (vp / prev.0).sqrt();
        out.max_gap = out.max_gap.max(gap);
        out.max_eps = out.max_eps.max(eps);
        if vp > 0.0 {
            let k = gap / (eta_lambda * eps);
            out.k_fit = Some(out.k_fit.map_or(k, |m: f64| m.max(k)));
        }
        prev = cur;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub eta: f64,
    pub lambda: f64,
    pub c1: f64,
    pub policy: RemainderPolicy,
    pub measured: u64,
    pub predicted: f64,
    /// |measured/predicted − 1| / η.
    pub k: f64,
    /// measured·ηλ.
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub target_ratio: f64,
    pub points: Vec<BoundPoint>,
    /// Single band constant covering every point.
    pub k_fit: f64,
    /// (max − min)/mean of measured·ηλ across (η, λ), worst over policies, per c1.
    pub scaling_spread: Vec<(f64, f64)>,
}

pub const GRID_ETA: [f64; 3] = [1e-4, 1e-3, 1e-2];
pub const GRID_LAMBDA: [f64; 2] = [0.1, 1.0];
pub const GRID_C1: [f64; 3] = [0.0, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundGrid {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub c1: Vec<f64>,
    #[serde(default = "all_policies")]
    pub policies: Vec<RemainderPolicy>,
}

fn all_policies() -> Vec<RemainderPolicy> {
    RemainderPolicy::ALL.to_vec()
}

impl Default for BoundGrid {
    fn default() -> Self {
        BoundGrid {
            eta: GRID_ETA.to_vec(),
            lambda: GRID_LAMBDA.to_vec(),
            c1: GRID_C1.to_vec(),
            policies: all_policies(),
        }
    }
}

/// Crossing time from V0 to V0·e^(−2) over the default (η, λ, c1, policy) grid.
pub fn bound_grid(seed: u64) -> Result<BoundReport> {
    bound_grid_over(&BoundGrid::default(), seed)
}

pub fn bound_grid_over(grid: &BoundGrid, seed: u64) -> Result<BoundReport> {
    if grid.eta.is_empty()
        || grid.lambda.is_empty()
        || grid.c1.is_empty()
        || grid.policies.is_empty()
    {
        return Err(invalid("bound grid has an empty axis"));
    }
    let target_ratio = (-2.0f64).exp();
    let mut points = Vec::new();
    for &c1 in &grid.c1 {
        for &policy in &grid.policies {
            for &eta in &grid.eta {
                for &lambda in &grid.lambda {
                    RecursionConfig::new(1.0, eta, lambda, c1, policy, 1).validate()?;
                    let predicted = predicted_crossing(1.0, target_ratio, eta, lambda);
                    let mut cfg = RecursionConfig::new(
                        1.0,
                        eta,
                        lambda,
                        c1,
                        policy,
                        (2.0 * predicted).ceil() as u64 + 10,
                    );
                    cfg.seed = seed;
                    let series = simulate_contraction(&cfg)?;
                    let measured = crossing_time(&series, target_ratio)
                        .ok_or_else(|| invalid("no crossing within horizon"))?;
                    points.push(BoundPoint {
                        eta,
                        lambda,
                        c1,
                        policy,
                        measured,
                        predicted,
                        k: (measured as f64 / predicted - 1.0).abs() / eta,
                        scaled: measured as f64 * eta * lambda,
                    });
                }
            }
        }
    }
    let k_fit = points.iter().map(|p| p.k).fold(0.0, f64::max);
    let scaling_spread = grid
        .c1
        .iter()
        .map(|&c1| {
            let worst = grid
                .policies
                .iter()
                .map(|&pol| {
                    let s: Vec<f64> = points
                        .iter()
                        .filter(|p| p.c1 == c1 && p.policy == pol)
                        .map(|p| p.scaled)
                        .collect();
                    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                    (hi - lo) / (s.iter().sum::<f64>() / s.len() as f64)
                })
                .fold(0.0, f64::max);
            (c1, worst)
        })
        .collect();
    Ok(BoundReport {
        target_ratio,
        points,
        k_fit,
        scaling_spread,
    })
}
