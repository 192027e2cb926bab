//! Per-trajectory fits: log-linear contraction rate, Kosson form, angular saturation, crossings.

use super::search::scan_refine;
use crate::error::{Error, Result};
use crate::math::least_squares_line;
use crate::trainer::{detect_t_grok, detect_t_mem, LogRow, MemMode, Thresholds, TrajectoryLog};
use serde::{Deserialize, Serialize};

const MIN_KAPPA_POINTS: usize = 5;
const MIN_KOSSON_POINTS: usize = 8;
const SCAN_POINTS: usize = 241;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowRule {
    /// Upper limit T_grok(0.99) − margin.
    Standard,
    /// Upper limit T_grok(0.95) − margin.
    Soft95,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa_ll: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
    pub n_points: usize,
    pub eta: f64,
    pub lambda: f64,
}

fn window_rows(log: &TrajectoryLog, start: u64, end: u64) -> Vec<&LogRow> {
    log.rows
        .iter()
        .filter(|r| r.step >= start && r.step <= end)
        .collect()
}

/// OLS of ln V on step over the logged rows inside `[start, end]`.
pub fn fit_kappa_window(
    log: &TrajectoryLog,
    start: u64,
    end: u64,
    eta: f64,
    lambda: f64,
) -> Result<KappaFit> {
    let rows = if end >= start {
        window_rows(log, start, end)
    } else {
        Vec::new()
    };
    if rows.len() < MIN_KAPPA_POINTS {
        return Err(Error::WindowTooShort {
            points: rows.len(),
            needed: MIN_KAPPA_POINTS,
        });
    }
    let t: Vec<f64> = rows.iter().map(|r| r.step as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.v.ln()).collect();
    let line = least_squares_line(&t, &y)?;
    Ok(KappaFit {
        kappa_ll: line.slope.abs() / (2.0 * eta * lambda),
        slope: line.slope,
        intercept: line.intercept,
        r_squared: line.r_squared,
        window: (rows[0].step, rows[rows.len() - 1].step),
        n_points: rows.len(),
        eta,
        lambda,
    })
}

/// Post-memorisation window `[T_mem + margin, T_grok − margin]` with default thresholds.
pub fn kappa_window(log: &TrajectoryLog, rule: WindowRule, margin: u64) -> Result<(u64, u64)> {
    let thr = Thresholds::default();
    let t_mem = detect_t_mem(log, MemMode::Acc, thr.acc_mem).ok_or(Error::WindowTooShort {
        points: 0,
        needed: MIN_KAPPA_POINTS,
    })?;
    let grok_thr = match rule {
        WindowRule::Standard => thr.acc_grok,
        WindowRule::Soft95 => thr.acc_grok_soft,
    };
    let t_grok = detect_t_grok(log, grok_thr).ok_or(Error::NoGrok)?;
    Ok((t_mem + margin, t_grok.saturating_sub(margin)))
}

pub fn fit_kappa_loglinear(
    log: &TrajectoryLog,
    rule: WindowRule,
    margin: u64,
    eta: f64,
    lambda: f64,
) -> Result<KappaFit> {
    let (start, end) = kappa_window(log, rule, margin)?;
    fit_kappa_window(log, start, end, eta, lambda)
}

/// Objective ranges below this count as flat; the second term absorbs roundoff on constant data.
fn flat_tol(sst: f64, y: &[f64]) -> f64 {
    1e-12 * (sst + 1e-12 * y.iter().map(|v| v * v).sum::<f64>())
}

/// `V = v_inf + amplitude·exp(−rate·(t − t0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KossonCurve {
    pub v_inf: f64,
    pub amplitude: f64,
    pub rate: f64,
    pub t0: f64,
    pub r_squared: f64,
    pub converged: bool,
}

impl KossonCurve {
    pub fn eval(&self, t: f64) -> f64 {
        self.v_inf + self.amplitude * (-self.rate * (t - self.t0)).exp()
    }
}

/// Best (v_inf ≥ 0, amplitude) at a fixed rate and the resulting squared error.
fn kosson_linear(t: &[f64], v: &[f64], t0: f64, rate: f64) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let e: Vec<f64> = t.iter().map(|&ti| (-rate * (ti - t0)).exp()).collect();
    let (em, vm) = (e.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
    let (sxx, sxy) = e.iter().zip(v).fold((0.0, 0.0), |acc, (ei, vi)| {
        (acc.0 + (ei - em).powi(2), acc.1 + (ei - em) * (vi - vm))
    });
    let mut a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut c = vm - a * em;
    if c < 0.0 {
        c = 0.0;
        a = e.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / e.iter().map(|x| x * x).sum::<f64>();
    }
    let sse = e
        .iter()
        .zip(v)
        .map(|(ei, vi)| (c + a * ei - vi).powi(2))
        .sum();
    (c, a, sse)
}

pub fn fit_kosson_series(t: &[f64], v: &[f64]) -> Result<KossonCurve> {
    if t.len() != v.len() {
        return Err(Error::InvalidInput("t and V lengths differ".into()));
    }
    if t.len() < MIN_KOSSON_POINTS {
        return Err(Error::WindowTooShort {
            points: t.len(),
            needed: MIN_KOSSON_POINTS,
        });
    }
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    if !(span > 0.0) {
        return Err(Error::DegenerateAbscissa);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sst: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let best = scan_refine(
        |r| kosson_linear(t, v, t0, r).2,
        1e-3 / span,
        1e3 / span,
        SCAN_POINTS,
        flat_tol(sst, v),
    );
    let (v_inf, amplitude, sse) = kosson_linear(t, v, t0, best.x);
    Ok(KossonCurve {
        v_inf,
        amplitude,
        rate: best.x,
        t0,
        r_squared: if sst > 0.0 { 1.0 - sse / sst } else { 0.0 },
        converged: !best.at_boundary && !best.flat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KossonFit {
    pub v_inf: f64,
    /// Amplitude at the window start.
    pub amplitude: f64,
    pub r_kos: f64,
    pub kappa_kos: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
    pub converged: bool,
    /// κ_LL / κ_kos, when paired with a log-linear fit.
    pub f_window: Option<f64>,
}

impl KossonFit {
    pub fn paired(mut self, kappa: &KappaFit) -> Self {
        self.f_window = Some(kappa.kappa_ll / self.kappa_kos);
        self
    }
}

pub fn fit_kosson(
    log: &TrajectoryLog,
    start: u64,
    end: u64,
    eta: f64,
    lambda: f64,
) -> Result<KossonFit> {
    let rows = window_rows(log, start, end);
    let t: Vec<f64> = rows.iter().map(|r| r.step as f64).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.v).collect();
    let c = fit_kosson_series(&t, &v)?;
    Ok(KossonFit {
        v_inf: c.v_inf,
        amplitude: c.amplitude,
        r_kos: c.rate,
        kappa_kos: c.rate / (2.0 * eta * lambda),
        r_squared: c.r_squared,
        window: (rows[0].step, rows[rows.len() - 1].step),
        converged: c.converged,
        f_window: None,
    })
}

/// `α(t') = alpha_final·(1 − exp(−t'/tau))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSaturation {
    pub alpha_final: f64,
    pub tau: f64,
    pub r_squared: f64,
    pub flag: Option<String>,
}

fn alpha_linear(t: &[f64], a: &[f64], tau: f64) -> (f64, f64) {
    let g: Vec<f64> = t.iter().map(|&ti| -(-ti / tau).exp_m1()).collect();
    let gg: f64 = g.iter().map(|x| x * x).sum();
    let af = if gg > 0.0 {
        g.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() / gg
    } else {
        0.0
    };
    (af, g.iter().zip(a).map(|(x, y)| (af * x - y).powi(2)).sum())
}

/// Fits on elapsed time `t` (≥ 0) since memorisation. `min_tau` is usually the log interval.
pub fn fit_alpha_saturation(t: &[f64], alpha_deg: &[f64], min_tau: f64) -> Result<AlphaSaturation> {
    if t.len() != alpha_deg.len() || t.len() < MIN_KAPPA_POINTS {
        return Err(Error::WindowTooShort {
            points: t.len().min(alpha_deg.len()),
            needed: MIN_KAPPA_POINTS,
        });
    }
    let span = t.iter().copied().fold(0.0, f64::max);
    if !(span > 0.0 && min_tau > 0.0 && min_tau < 100.0 * span) {
        return Err(Error::DegenerateAbscissa);
    }
    let mean = alpha_deg.iter().sum::<f64>() / alpha_deg.len() as f64;
    let sst: f64 = alpha_deg.iter().map(|x| (x - mean).powi(2)).sum();
    let best = scan_refine(
        |tau| alpha_linear(t, alpha_deg, tau).1,
        min_tau,
        100.0 * span,
        SCAN_POINTS,
        flat_tol(sst, alpha_deg),
    );
    let (alpha_final, sse) = alpha_linear(t, alpha_deg, best.x);
    let max = alpha_deg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let flag = if max < 1.0 {
        Some("no angular motion".to_string())
    } else if best.at_boundary || best.flat {
        Some("no saturating angular motion: tau at scan bound".to_string())
    } else {
        None
    };
    Ok(AlphaSaturation {
        alpha_final,
        tau: best.x,
        r_squared: if sst > 0.0 { 1.0 - sse / sst } else { 0.0 },
        flag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timescales {
    pub tau_v: Option<f64>,
    pub tau_alpha: Option<f64>,
    /// τ_V / τ_α, absent when either side is missing or flagged.
    pub ratio: Option<f64>,
    pub flag: Option<String>,
}

/// τ_V from the log-linear V fit after memorisation (to T_grok − margin, else to the end of the log);
/// τ_α from the angular saturation fit over all post-memorisation rows.
pub fn fit_timescales(log: &TrajectoryLog, margin: u64) -> Result<Timescales> {
    let thr = Thresholds::default();
    let t_mem = detect_t_mem(log, MemMode::Acc, thr.acc_mem).ok_or(Error::WindowTooShort {
        points: 0,
        needed: MIN_KAPPA_POINTS,
    })?;
    let end = detect_t_grok(log, thr.acc_grok)
        .map(|g| g.saturating_sub(margin))
        .unwrap_or_else(|| log.last().map_or(0, |r| r.step));
    let tau_v = fit_kappa_window(log, t_mem + margin, end, 1.0, 1.0)
        .ok()
        .map(|k| 1.0 / k.slope.abs());

    let post: Vec<(f64, f64)> = log
        .rows
        .iter()
        .filter(|r| r.step >= t_mem)
        .filter_map(|r| r.alpha_deg().map(|a| ((r.step - t_mem) as f64, a)))
        .collect();
    let (t, a): (Vec<f64>, Vec<f64>) = post.into_iter().unzip();
    let interval = match log.rows.as_slice() {
        [a, b, ..] => (b.step - a.step) as f64,
        _ => 1.0,
    };
    let sat = fit_alpha_saturation(&t, &a, interval)?;
    let tau_alpha = sat.flag.is_none().then_some(sat.tau);
    Ok(Timescales {
        tau_v,
        tau_alpha,
        ratio: tau_v.zip(tau_alpha).map(|(v, a)| v / a),
        flag: sat.flag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Interpolated step.
    pub step: f64,
    pub v_star: f64,
    pub alpha_star: Option<f64>,
}

/// First crossing of `val_acc ≥ threshold`, linearly interpolated against the previous row.
pub fn measure_crossing(log: &TrajectoryLog, threshold: f64) -> Option<Crossing> {
    let i = log.rows.iter().position(|r| r.val_acc >= threshold)?;
    let hi = &log.rows[i];
    if i == 0 || hi.val_acc == threshold {
        return Some(Crossing {
            step: hi.step as f64,
            v_star: hi.v,
            alpha_star: hi.alpha_deg(),
        });
    }
    let lo = &log.rows[i - 1];
    let w = (threshold - lo.val_acc) / (hi.val_acc - lo.val_acc);
    let lerp = |a: f64, b: f64| a + w * (b - a);
    Some(Crossing {
        step: lerp(lo.step as f64, hi.step as f64),
        v_star: lerp(lo.v, hi.v),
        alpha_star: lo.alpha_deg().zip(hi.alpha_deg()).map(|(a, b)| lerp(a, b)),
    })
}
