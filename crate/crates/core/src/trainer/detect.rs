//! Event detection on a trajectory log.

use super::config::PlateauConfig;
use super::log::TrajectoryLog;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemMode {
    /// train_acc ≥ threshold.
    Acc,
    /// train_loss < threshold.
    Loss,
}

pub fn detect_t_mem(log: &TrajectoryLog, mode: MemMode, threshold: f64) -> Option<u64> {
    log.rows
        .iter()
        .find(|r| match mode {
            MemMode::Acc => r.train_acc >= threshold,
            MemMode::Loss => r.train_loss < threshold,
        })
        .map(|r| r.step)
}

pub fn detect_t_grok(log: &TrajectoryLog, threshold: f64) -> Option<u64> {
    log.rows
        .iter()
        .find(|r| r.val_acc >= threshold)
        .map(|r| r.step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VPostMethod {
    Plateau,
    TailFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VPost {
    pub value: f64,
    pub method: VPostMethod,
    /// First and last step of the averaged rows.
    pub window: (u64, u64),
}

/// Population mean and relative standard deviation.
pub(crate) fn mean_rel_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt() / mean.abs())
}

/// First qualifying plateau window starting at least `min_steps_after_grok` after `t_grok`.
pub fn find_plateau(log: &TrajectoryLog, t_grok: u64, cfg: &PlateauConfig) -> Option<VPost> {
    let start = log
        .rows
        .iter()
        .position(|r| r.step >= t_grok + cfg.min_steps_after_grok)?;
    let v: Vec<f64> = log.rows.iter().map(|r| r.v).collect();
    (start..=v.len().checked_sub(cfg.window)?).find_map(|i| {
        let (mean, rs) = mean_rel_std(&v[i..i + cfg.window]);
        (rs < cfg.rel_std).then(|| VPost {
            value: mean,
            method: VPostMethod::Plateau,
            window: (log.rows[i].step, log.rows[i + cfg.window - 1].step),
        })
    })
}

/// V_post: the plateau mean, or the mean of the last `tail_points` rows when no plateau exists.
pub fn detect_v_post_plateau(
    log: &TrajectoryLog,
    t_grok: Option<u64>,
    cfg: &PlateauConfig,
) -> Result<VPost> {
    let t_grok = t_grok.ok_or(Error::NoGrok)?;
    if let Some(p) = find_plateau(log, t_grok, cfg) {
        return Ok(p);
    }
    let n = log.rows.len();
    if n == 0 {
        return Err(Error::NoGrok);
    }
    let tail = &log.rows[n.saturating_sub(cfg.tail_points)..];
    let value = tail.iter().map(|r| r.v).sum::<f64>() / tail.len() as f64;
    Ok(VPost {
        value,
        method: VPostMethod::TailFallback,
        window: (tail[0].step, tail[tail.len() - 1].step),
    })
}
