//! Per-run records, cell statistics, single-cell calibration and held-out validation.

use super::fits::{fit_kappa_loglinear, fit_timescales, measure_crossing, WindowRule};
use super::predict::{predict_delay_a, predict_delay_b};
use super::stats::{cv, iqr, mape, mean, median, std_pop};
use crate::error::{invalid, Result};
use crate::models::Arch;
use crate::trainer::{RunSummary, TrajectoryLog};
use serde::{Deserialize, Serialize};

/// κ statistics only admit runs whose log-linear fit clears this R².
pub const KAPPA_MIN_R2: f64 = 0.9;
pub const FIT_MARGIN: u64 = 100;
pub const CROSSING_ACC: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellId {
    pub task: String,
    pub arch: Arch,
    pub p: u64,
    pub eta: f64,
    pub lambda: f64,
}

impl CellId {
    pub fn label(&self) -> String {
        format!(
            "{}/{}/p{}/eta{}/wd{}",
            self.task,
            self.arch.name(),
            self.p,
            self.eta,
            self.lambda
        )
    }
}

/// What analysis needs from one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: CellId,
    pub seed: u64,
    pub t_mem: Option<u64>,
    pub t_grok: Option<u64>,
    pub t_grok_95: Option<u64>,
    pub v_mem: Option<f64>,
    pub v_post: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_r2: Option<f64>,
    pub v_star: Option<f64>,
    pub alpha_star: Option<f64>,
    pub tau_v: Option<f64>,
    pub tau_alpha: Option<f64>,
    pub alpha_final: Option<f64>,
}

impl RunRecord {
    pub fn from_run(cell: CellId, seed: u64, log: &TrajectoryLog, summary: &RunSummary) -> Self {
        let kfit =
            fit_kappa_loglinear(log, WindowRule::Standard, FIT_MARGIN, cell.eta, cell.lambda).ok();
        let crossing = measure_crossing(log, CROSSING_ACC);
        let ts = fit_timescales(log, FIT_MARGIN).ok();
        RunRecord {
            seed,
            t_mem: summary.t_mem,
            t_grok: summary.t_grok_99,
            t_grok_95: summary.t_grok_95,
            v_mem: summary.v_mem,
            v_post: summary.v_post,
            kappa: kfit.map(|k| k.kappa_ll),
            kappa_r2: kfit.map(|k| k.r_squared),
            v_star: crossing.map(|c| c.v_star),
            alpha_star: crossing.and_then(|c| c.alpha_star),
            tau_v: ts.as_ref().and_then(|t| t.tau_v),
            tau_alpha: ts.as_ref().and_then(|t| t.tau_alpha),
            alpha_final: summary.alpha_final,
            cell,
        }
    }

    pub fn qualifies(&self) -> bool {
        self.kappa.is_some() && self.kappa_r2.is_some_and(|r| r > KAPPA_MIN_R2)
    }

    pub fn delay(&self) -> Option<u64> {
        Some(self.t_grok? - self.t_mem?)
    }
}

/// Groups records by cell, keeping first-appearance order.
pub fn group_by_cell(runs: &[RunRecord]) -> Vec<(CellId, Vec<&RunRecord>)> {
    let mut out: Vec<(CellId, Vec<&RunRecord>)> = Vec::new();
    for r in runs {
        match out.iter_mut().find(|(c, _)| *c == r.cell) {
            Some((_, v)) => v.push(r),
            None => out.push((r.cell.clone(), vec![r])),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub n: usize,
    pub median: f64,
    pub iqr: (f64, f64),
    pub cv: Option<f64>,
}

impl Spread {
    fn of(xs: &[f64]) -> Option<Spread> {
        (!xs.is_empty()).then(|| Spread {
            n: xs.len(),
            median: median(xs),
            iqr: iqr(xs),
            cv: cv(xs),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: CellId,
    pub seeds: Vec<u64>,
    pub kappa: Option<Spread>,
    pub v_star: Option<Spread>,
    pub alpha_star: Option<Spread>,
    pub tau_ratio: Option<Spread>,
    pub t_grok: Option<Spread>,
    pub v_mem_median: Option<f64>,
    /// median V⋆ / median V_mem.
    pub v_star_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatistics {
    pub cells: Vec<CellSummary>,
    pub pooled_kappa: Option<Spread>,
    /// Median over cells of the within-cell κ CV.
    pub within_cell_median_kappa_cv: Option<f64>,
}

fn collect(runs: &[&RunRecord], f: impl Fn(&RunRecord) -> Option<f64>) -> Vec<f64> {
    runs.iter().filter_map(|r| f(r)).collect()
}

fn kappas(runs: &[&RunRecord]) -> Vec<f64> {
    runs.iter()
        .filter(|r| r.qualifies())
        .filter_map(|r| r.kappa)
        .collect()
}

pub fn summarize_cell(cell: CellId, runs: &[&RunRecord]) -> CellSummary {
    let v_mem = collect(runs, |r| r.v_mem);
    let v_star = collect(runs, |r| r.v_star);
    let v_mem_median = (!v_mem.is_empty()).then(|| median(&v_mem));
    let v_star_ratio = v_mem_median
        .filter(|_| !v_star.is_empty())
        .map(|m| median(&v_star) / m);
    CellSummary {
        cell,
        seeds: runs.iter().map(|r| r.seed).collect(),
        kappa: Spread::of(&kappas(runs)),
        v_star: Spread::of(&v_star),
        alpha_star: Spread::of(&collect(runs, |r| r.alpha_star)),
        tau_ratio: Spread::of(&collect(runs, |r| Some(r.tau_v? / r.tau_alpha?))),
        t_grok: Spread::of(&collect(runs, |r| r.t_grok.map(|t| t as f64))),
        v_mem_median,
        v_star_ratio,
    }
}

pub fn cell_statistics(runs: &[RunRecord]) -> CellStatistics {
    let cells: Vec<CellSummary> = group_by_cell(runs)
        .into_iter()
        .map(|(c, rs)| summarize_cell(c, &rs))
        .collect();
    let all: Vec<&RunRecord> = runs.iter().collect();
    let within: Vec<f64> = cells.iter().filter_map(|c| c.kappa.as_ref()?.cv).collect();
    CellStatistics {
        pooled_kappa: Spread::of(&kappas(&all)),
        within_cell_median_kappa_cv: (!within.is_empty()).then(|| median(&within)),
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kappa_train: f64,
    pub v_star_train: f64,
    pub n_runs: usize,
}

/// Median κ and median V⋆ over runs with a qualifying fit and a measured crossing.
pub fn calibrate(runs: &[&RunRecord], min_runs: usize) -> Result<Calibration> {
    let ok: Vec<&&RunRecord> = runs
        .iter()
        .filter(|r| r.qualifies() && r.v_star.is_some())
        .collect();
    if ok.len() < min_runs.max(1) {
        return Err(invalid(format!(
            "calibration needs {min_runs} qualifying runs, found {}",
            ok.len()
        )));
    }
    let k: Vec<f64> = ok.iter().filter_map(|r| r.kappa).collect();
    let v: Vec<f64> = ok.iter().filter_map(|r| r.v_star).collect();
    Ok(Calibration {
        kappa_train: median(&k),
        v_star_train: median(&v),
        n_runs: ok.len(),
    })
}

/// Predicted T_grok = T_mem + predicted delay, for methods A and B.
pub fn predict_t_grok(cal: &Calibration, run: &RunRecord) -> (Option<f64>, Option<f64>) {
    let (eta, lam) = (run.cell.eta, run.cell.lambda);
    let (Some(tm), Some(vm)) = (run.t_mem, run.v_mem) else {
        return (None, None);
    };
    let a = run
        .v_post
        .and_then(|vp| predict_delay_a(cal.kappa_train, eta, lam, vm, vp).ok())
        .map(|d| tm as f64 + d.steps);
    let b = predict_delay_b(cal.kappa_train, cal.v_star_train, eta, lam, vm)
        .ok()
        .map(|d| tm as f64 + d.steps);
    (a, b)
}

/// 1: same task, p and arch, other (η, λ); 2: same task and p, other arch; 3: other p or task.
pub fn tier_of(calibration: &CellId, cell: &CellId) -> Option<u8> {
    if cell == calibration {
        None
    } else if cell.task != calibration.task || cell.p != calibration.p {
        Some(3)
    } else if cell.arch != calibration.arch {
        Some(2)
    } else {
        Some(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierCellRow {
    pub cell: CellId,
    pub tier: u8,
    pub n: usize,
    pub median_t_grok: Option<f64>,
    pub mape_a: Option<f64>,
    pub mape_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRow {
    pub tier: u8,
    pub n: usize,
    /// max/min observed delay among the pooled runs.
    pub delay_range: Option<f64>,
    pub mape_a: Option<f64>,
    pub mape_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub calibration_cell: CellId,
    pub calibration: Calibration,
    pub cells: Vec<TierCellRow>,
    /// Nested: tier k pools every held-out run with tier ≤ k.
    pub tiers: Vec<TierRow>,
    pub notes: Vec<String>,
}

struct Scored {
    tier: u8,
    observed: f64,
    delay: f64,
    a: Option<f64>,
    b: Option<f64>,
}

fn mape_of(rows: &[&Scored], pick: impl Fn(&Scored) -> Option<f64>) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|s| Some((pick(s)?, s.observed)))
        .collect();
    let (p, o): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    mape(&p, &o).ok()
}

pub fn three_tier_report(runs: &[RunRecord], calibration_cell: &CellId) -> Result<TierReport> {
    let calib_runs: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| r.cell == *calibration_cell)
        .collect();
    let calibration = calibrate(&calib_runs, 3)?;
    let mut notes = Vec::new();
    let mut cells = Vec::new();
    let mut scored = Vec::new();
    for (cell, rs) in group_by_cell(runs) {
        let Some(tier) = tier_of(calibration_cell, &cell) else {
            continue;
        };
        let mut mine = Vec::new();
        for r in rs
            .iter()
            .filter(|r| r.t_grok.is_some() && r.t_mem.is_some())
        {
            let (a, b) = predict_t_grok(&calibration, r);
            mine.push(Scored {
                tier,
                observed: r.t_grok.unwrap() as f64,
                delay: r.delay().unwrap() as f64,
                a,
                b,
            });
        }
        if mine.len() < rs.len() {
            notes.push(format!(
                "{}: {} of {} runs did not grok and are excluded",
                cell.label(),
                rs.len() - mine.len(),
                rs.len()
            ));
        }
        let refs: Vec<&Scored> = mine.iter().collect();
        let obs: Vec<f64> = mine.iter().map(|s| s.observed).collect();
        cells.push(TierCellRow {
            tier,
            n: mine.len(),
            median_t_grok: (!obs.is_empty()).then(|| median(&obs)),
            mape_a: mape_of(&refs, |s| s.a),
            mape_b: mape_of(&refs, |s| s.b),
            cell,
        });
        scored.extend(mine);
    }
    let mut tiers = Vec::new();
    for tier in 1..=3u8 {
        if !scored.iter().any(|s| s.tier == tier) {
            notes.push(format!("tier {tier} is empty"));
            continue;
        }
        let pool: Vec<&Scored> = scored.iter().filter(|s| s.tier <= tier).collect();
        let delays: Vec<f64> = pool.iter().map(|s| s.delay).filter(|d| *d > 0.0).collect();
        let range = (delays.len() >= 2).then(|| {
            delays.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                / delays.iter().copied().fold(f64::INFINITY, f64::min)
        });
        tiers.push(TierRow {
            tier,
            n: pool.len(),
            delay_range: range,
            mape_a: mape_of(&pool, |s| s.a),
            mape_b: mape_of(&pool, |s| s.b),
        });
    }
    Ok(TierReport {
        calibration_cell: calibration_cell.clone(),
        calibration,
        cells,
        tiers,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvFold {
    pub left_out_seed: u64,
    pub kappa_train: f64,
    pub v_star_train: f64,
    /// |pred − obs|/obs·100 for the left-out run under method B.
    pub error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    /// (max − min)/full-sample value across folds, in percent.
    pub v_star_variation_pct: f64,
    pub kappa_variation_pct: f64,
    pub folds: Vec<LoocvFold>,
}

pub fn loocv_calibration(cell_runs: &[RunRecord]) -> Result<LoocvReport> {
    if cell_runs.len() < 3 {
        return Err(invalid(format!(
            "leave-one-out needs ≥ 3 runs, got {}",
            cell_runs.len()
        )));
    }
    let all: Vec<&RunRecord> = cell_runs.iter().collect();
    let full = calibrate(&all, 1)?;
    let mut folds = Vec::new();
    for (i, left) in cell_runs.iter().enumerate() {
        let rest: Vec<&RunRecord> = cell_runs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, r)| r)
            .collect();
        let cal = calibrate(&rest, 1)?;
        let error_pct = match (predict_t_grok(&cal, left).1, left.t_grok) {
            (Some(p), Some(o)) if o > 0 => Some(100.0 * (p - o as f64).abs() / o as f64),
            _ => None,
        };
        folds.push(LoocvFold {
            left_out_seed: left.seed,
            kappa_train: cal.kappa_train,
            v_star_train: cal.v_star_train,
            error_pct,
        });
    }
    let spread = |f: fn(&LoocvFold) -> f64, base: f64| {
        let xs: Vec<f64> = folds.iter().map(f).collect();
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        100.0 * (hi - lo) / base
    };
    Ok(LoocvReport {
        v_star_variation_pct: spread(|f| f.v_star_train, full.v_star_train),
        kappa_variation_pct: spread(|f| f.kappa_train, full.kappa_train),
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStability {
    pub arch: Arch,
    pub n_cells: usize,
    pub mean: f64,
    pub std: f64,
    /// Absent below two cells.
    pub cv: Option<f64>,
    pub range: (f64, f64),
}

/// Per-architecture statistics of the per-cell V⋆/V_mem ratio.
pub fn ratio_stability(cells: &[CellSummary]) -> Vec<RatioStability> {
    let mut archs: Vec<Arch> = Vec::new();
    for c in cells {
        if !archs.contains(&c.cell.arch) {
            archs.push(c.cell.arch);
        }
    }
    archs
        .into_iter()
        .filter_map(|arch| {
            let r: Vec<f64> = cells
                .iter()
                .filter(|c| c.cell.arch == arch)
                .filter_map(|c| c.v_star_ratio)
                .collect();
            (!r.is_empty()).then(|| RatioStability {
                arch,
                n_cells: r.len(),
                mean: mean(&r),
                std: std_pop(&r),
                cv: cv(&r),
                range: (
                    r.iter().copied().fold(f64::INFINITY, f64::min),
                    r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ),
            })
        })
        .collect()
}
