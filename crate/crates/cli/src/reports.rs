//! `analyze`: per-run records, cell statistics, tier report, LOOCV, overshoot and C calibration.

use crate::campaign::{load_manifest, load_summary, load_trajectory, Manifest, PlannedRun, Scope};
use crate::io::{self, REPORT_SCHEMA, VALUES_SCHEMA};
use anyhow::Result;
use grokking_core::analysis::{
    calibrate_c, cell_statistics, fit_overshoot_law, loocv_calibration, median, overshoot_metrics,
    ratio_stability, three_tier_report, CCalibration, CCell, CellId, CellStatistics, LoocvReport,
    OvershootMetrics, PowerLawFit, RatioStability, RunRecord, TierReport,
};
use grokking_core::tasks::ModOp;
use grokking_core::trainer::{Intervention, RunConfig, TaskConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub type Values = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub cell: String,
    pub seed: u64,
    pub run_id: String,
    pub intervention: String,
    pub grokked: bool,
    pub diverged: bool,
    pub freeze_rel_std: Option<f64>,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub cell: String,
    pub seed: u64,
    pub run_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsReport {
    pub runs: Vec<RunEntry>,
    pub excluded: Vec<Exclusion>,
}

/// Aggregates over one campaign cell, whatever its role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignCell {
    pub id: String,
    pub intervention: String,
    pub runs: usize,
    pub grokked: usize,
    pub qualifying_fits: usize,
    pub min_kappa_r2: Option<f64>,
    pub kappa_median: Option<f64>,
    pub t_grok_median: Option<f64>,
    pub zero_delay: usize,
    pub max_delay: Option<u64>,
    pub v_mem_gt_v_post: usize,
    pub v_post_gt_v_mem: usize,
    pub alpha_star_median: Option<f64>,
    pub max_alpha_final: Option<f64>,
    pub max_freeze_rel_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellsReport {
    pub campaign_cells: Vec<CampaignCell>,
    /// Over runs without an intervention.
    pub statistics: CellStatistics,
    pub ratio_stability: Vec<RatioStability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootRow {
    pub cell: String,
    pub seed: u64,
    /// ln(V_mem/V_post).
    pub rho: Option<f64>,
    pub metrics: OvershootMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootReport {
    pub rows: Vec<OvershootRow>,
    pub law: Option<PowerLawFit>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub campaign_id: String,
    pub runs: RunsReport,
    pub cells: CellsReport,
    pub tiers: Option<TierReport>,
    pub loocv: Option<LoocvReport>,
    pub overshoot: OvershootReport,
    pub c_calibration: Option<CCalibration>,
    pub notes: Vec<String>,
    pub values: Values,
}

pub fn reports_dir(out: &Path) -> PathBuf {
    out.join("reports")
}

pub fn values_path(out: &Path) -> PathBuf {
    reports_dir(out).join("values.json")
}

pub fn cell_id_of(cfg: &RunConfig) -> CellId {
    let (task, p) = match cfg.task {
        TaskConfig::Modular { op: ModOp::Add, p } => ("add", p),
        TaskConfig::Modular { op: ModOp::Mult, p } => ("mult", p),
        TaskConfig::Parity { n, .. } => ("parity", n),
    };
    CellId {
        task: task.into(),
        arch: cfg.model.arch,
        p: p as u64,
        eta: cfg.optimizer.eta,
        lambda: cfg.optimizer.lambda,
    }
}

fn load_entry(
    out: &Path,
    run: &PlannedRun,
) -> Result<(
    RunEntry,
    grokking_core::trainer::TrajectoryLog,
    grokking_core::trainer::RunSummary,
)> {
    let summary = load_summary(out, &run.run_id)?;
    let log = load_trajectory(out, &run.run_id)?;
    let record = RunRecord::from_run(cell_id_of(&run.config), run.seed, &log, &summary);
    let entry = RunEntry {
        cell: run.cell.clone(),
        seed: run.seed,
        run_id: run.run_id.clone(),
        intervention: run.config.intervention.label().into(),
        grokked: summary.grokked,
        diverged: summary.diverged_at.is_some(),
        freeze_rel_std: summary.freeze_rel_std,
        record,
    };
    Ok((entry, log, summary))
}

fn opt_median(xs: Vec<f64>) -> Option<f64> {
    (!xs.is_empty()).then(|| median(&xs))
}

fn opt_max(xs: impl Iterator<Item = f64>) -> Option<f64> {
    xs.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
}

fn campaign_cell(id: &str, intervention: &str, runs: &[&RunEntry]) -> CampaignCell {
    let recs: Vec<&RunRecord> = runs.iter().map(|e| &e.record).collect();
    let qualifying: Vec<f64> = recs
        .iter()
        .filter(|r| r.qualifies())
        .filter_map(|r| r.kappa)
        .collect();
    let pair = |f: fn(f64, f64) -> bool| {
        recs.iter()
            .filter(|r| matches!((r.v_mem, r.v_post), (Some(m), Some(p)) if f(m, p)))
            .count()
    };
    CampaignCell {
        id: id.into(),
        intervention: intervention.into(),
        runs: runs.len(),
        grokked: runs.iter().filter(|e| e.grokked).count(),
        qualifying_fits: qualifying.len(),
        // absent unless every run has a fit
        min_kappa_r2: recs
            .iter()
            .map(|r| r.kappa_r2)
            .collect::<Option<Vec<f64>>>()
            .filter(|v| !v.is_empty())
            .map(|v| v.into_iter().fold(f64::INFINITY, f64::min)),
        kappa_median: opt_median(qualifying),
        t_grok_median: opt_median(
            recs.iter()
                .filter_map(|r| r.t_grok.map(|t| t as f64))
                .collect(),
        ),
        zero_delay: recs.iter().filter(|r| r.delay() == Some(0)).count(),
        max_delay: recs.iter().filter_map(|r| r.delay()).max(),
        v_mem_gt_v_post: pair(|m, p| m > p),
        v_post_gt_v_mem: pair(|m, p| p > m),
        alpha_star_median: opt_median(recs.iter().filter_map(|r| r.alpha_star).collect()),
        max_alpha_final: opt_max(recs.iter().filter_map(|r| r.alpha_final)),
        max_freeze_rel_std: opt_max(runs.iter().filter_map(|e| e.freeze_rel_std)),
    }
}

fn put(values: &mut Values, key: String, v: Option<f64>) {
    if let Some(v) = v.filter(|v| v.is_finite()) {
        values.insert(key, v);
    }
}

/// Loads every run in the manifest and computes all reports; unreadable runs are excluded with a note.
pub fn analyze(manifest: &Manifest, out: &Path) -> Analysis {
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    let mut overshoot_rows = Vec::new();
    let mut notes = Vec::new();
    for run in &manifest.runs {
        match load_entry(out, run) {
            Ok((entry, log, summary)) => {
                if summary.grokked && run.config.intervention == Intervention::None {
                    if let Ok(m) = overshoot_metrics(&log, &summary) {
                        let rho = summary.v_mem.zip(summary.v_post).map(|(a, b)| (a / b).ln());
                        overshoot_rows.push(OvershootRow {
                            cell: run.cell.clone(),
                            seed: run.seed,
                            rho,
                            metrics: m,
                        });
                    }
                }
                entries.push(entry);
            }
            Err(e) => {
                notes.push(format!("excluded {} seed {}: {e:#}", run.cell, run.seed));
                excluded.push(Exclusion {
                    cell: run.cell.clone(),
                    seed: run.seed,
                    run_id: run.run_id.clone(),
                    reason: format!("{e:#}"),
                });
            }
        }
    }

    let mut cell_order: Vec<(&str, &str)> = Vec::new();
    for r in &manifest.runs {
        if !cell_order.iter().any(|(c, _)| *c == r.cell) {
            cell_order.push((&r.cell, r.config.intervention.label()));
        }
    }
    let campaign_cells: Vec<CampaignCell> = cell_order
        .iter()
        .map(|(id, iv)| {
            let rs: Vec<&RunEntry> = entries.iter().filter(|e| e.cell == *id).collect();
            campaign_cell(id, iv, &rs)
        })
        .collect();
    let plain: Vec<RunRecord> = entries
        .iter()
        .filter(|e| e.intervention == "none")
        .map(|e| e.record.clone())
        .collect();
    let statistics = cell_statistics(&plain);
    let stability = ratio_stability(&statistics.cells);

    let spec = &manifest.analysis;
    let records_of = |id: &str| -> Vec<RunRecord> {
        entries
            .iter()
            .filter(|e| e.cell == id)
            .map(|e| e.record.clone())
            .collect()
    };
    let mut tiers = None;
    let mut loocv = None;
    if let Some(cal) = &spec.calibration_cell {
        let cal_runs = records_of(cal);
        let mut pool = cal_runs.clone();
        for h in &spec.held_out {
            pool.extend(records_of(h));
        }
        match cal_runs.first() {
            Some(first) => match three_tier_report(&pool, &first.cell) {
                Ok(t) => tiers = Some(t),
                Err(e) => notes.push(format!("tier report unavailable: {e}")),
            },
            None => {
                notes.push("tier report unavailable: calibration cell has no loaded runs".into())
            }
        }
        match loocv_calibration(
            &cal_runs
                .iter()
                .filter(|r| r.qualifies() && r.v_star.is_some())
                .cloned()
                .collect::<Vec<_>>(),
        ) {
            Ok(l) => loocv = Some(l),
            Err(e) => notes.push(format!("leave-one-out unavailable: {e}")),
        }
    }

    let ccells: Vec<CCell> = campaign_cells
        .iter()
        .filter(|c| c.intervention == "none")
        .filter_map(|c| {
            let rs: Vec<&RunEntry> = entries
                .iter()
                .filter(|e| e.cell == c.id && e.record.cell.task != "parity")
                .collect();
            let sqrt_v = opt_median(
                rs.iter()
                    .filter_map(|e| e.record.v_mem)
                    .map(f64::sqrt)
                    .collect(),
            )?;
            Some(CCell {
                p: rs.first()?.record.cell.p,
                sqrt_v_tmem: sqrt_v,
                alpha_star_deg: c.alpha_star_median?,
            })
        })
        .collect();
    let c_calibration = calibrate_c(&ccells).ok();

    let law_points: Vec<(f64, f64)> = overshoot_rows
        .iter()
        .filter_map(|r| Some((r.metrics.rho_drop, r.metrics.extra_delay_ratio?)))
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    let mut overshoot_notes = Vec::new();
    let law = match fit_overshoot_law(&law_points, 1000, 0) {
        Ok(f) => Some(f),
        Err(e) => {
            overshoot_notes.push(format!("overshoot law not fitted: {e}"));
            None
        }
    };

    let mut values = Values::new();
    values.insert("meta.runs".into(), manifest.runs.len() as f64);
    values.insert("meta.loaded".into(), entries.len() as f64);
    values.insert("meta.excluded".into(), excluded.len() as f64);
    values.insert(
        "meta.scope_full".into(),
        if manifest.scope == Scope::Full {
            1.0
        } else {
            0.0
        },
    );
    let baseline_star = spec
        .baseline_cell
        .as_ref()
        .and_then(|b| campaign_cells.iter().find(|c| &c.id == b))
        .and_then(|c| c.alpha_star_median);
    for c in &campaign_cells {
        let k = |m: &str| format!("cell.{}.{m}", c.id);
        values.insert(k("runs"), c.runs as f64);
        values.insert(k("grokked"), c.grokked as f64);
        values.insert(k("qualifying_fits"), c.qualifying_fits as f64);
        values.insert(k("zero_delay"), c.zero_delay as f64);
        values.insert(k("v_mem_gt_v_post"), c.v_mem_gt_v_post as f64);
        values.insert(k("v_post_gt_v_mem"), c.v_post_gt_v_mem as f64);
        put(&mut values, k("min_kappa_r2"), c.min_kappa_r2);
        put(&mut values, k("kappa_median"), c.kappa_median);
        put(&mut values, k("t_grok_median"), c.t_grok_median);
        put(&mut values, k("max_delay"), c.max_delay.map(|d| d as f64));
        put(&mut values, k("alpha_star_median"), c.alpha_star_median);
        put(&mut values, k("max_alpha_final"), c.max_alpha_final);
        put(&mut values, k("max_freeze_rel_std"), c.max_freeze_rel_std);
        if c.intervention != "none" {
            put(
                &mut values,
                k("alpha_final_minus_baseline_alpha_star"),
                c.max_alpha_final.zip(baseline_star).map(|(a, s)| a - s),
            );
        }
    }
    put(
        &mut values,
        "stats.pooled_kappa_median".into(),
        statistics.pooled_kappa.as_ref().map(|s| s.median),
    );
    put(
        &mut values,
        "stats.within_cell_median_kappa_cv".into(),
        statistics.within_cell_median_kappa_cv,
    );
    if let Some(t) = &tiers {
        values.insert("calibration.kappa".into(), t.calibration.kappa_train);
        values.insert("calibration.v_star".into(), t.calibration.v_star_train);
        values.insert("calibration.n_runs".into(), t.calibration.n_runs as f64);
        for row in &t.tiers {
            values.insert(format!("tier.{}.n", row.tier), row.n as f64);
            put(&mut values, format!("tier.{}.mape_a", row.tier), row.mape_a);
            put(&mut values, format!("tier.{}.mape_b", row.tier), row.mape_b);
            put(
                &mut values,
                format!("tier.{}.delay_range", row.tier),
                row.delay_range,
            );
        }
        if let Some(last) = t.tiers.last() {
            put(&mut values, "tier.pooled.mape_a".into(), last.mape_a);
            put(&mut values, "tier.pooled.mape_b".into(), last.mape_b);
            put(
                &mut values,
                "tier.pooled.b_minus_a".into(),
                last.mape_b.zip(last.mape_a).map(|(b, a)| b - a),
            );
        }
    }
    if let Some(l) = &loocv {
        values.insert("loocv.kappa_variation_pct".into(), l.kappa_variation_pct);
        values.insert("loocv.v_star_variation_pct".into(), l.v_star_variation_pct);
    }
    if let Some(c) = &c_calibration {
        values.insert("c_form.mean".into(), c.mean);
        values.insert("c_form.cv".into(), c.cv);
    }
    if let Some(l) = &law {
        values.insert("overshoot.law_exponent".into(), l.b);
    }

    Analysis {
        campaign_id: manifest.campaign_id.clone(),
        runs: RunsReport {
            runs: entries,
            excluded,
        },
        cells: CellsReport {
            campaign_cells,
            statistics,
            ratio_stability: stability,
        },
        tiers,
        loocv,
        overshoot: OvershootReport {
            rows: overshoot_rows,
            law,
            notes: overshoot_notes,
        },
        c_calibration,
        notes,
        values,
    }
}

/// Reads the manifest under `out`, analyses, and writes every report to `out/reports`.
pub fn cmd_analyze(out: &Path) -> Result<Analysis> {
    let manifest = load_manifest(out)?;
    if manifest.runs.is_empty() {
        anyhow::bail!("manifest lists no runs");
    }
    let a = analyze(&manifest, out);
    let dir = reports_dir(out);
    io::write_json(&dir.join("runs.json"), REPORT_SCHEMA, &a.runs)?;
    io::write_json(&dir.join("cells.json"), REPORT_SCHEMA, &a.cells)?;
    io::write_json(&dir.join("tiers.json"), REPORT_SCHEMA, &a.tiers)?;
    io::write_json(
        &dir.join("calibration.json"),
        REPORT_SCHEMA,
        &(a.tiers.as_ref().map(|t| &t.calibration), &a.loocv),
    )?;
    io::write_json(&dir.join("overshoot.json"), REPORT_SCHEMA, &a.overshoot)?;
    io::write_json(
        &dir.join("c_calibration.json"),
        REPORT_SCHEMA,
        &a.c_calibration,
    )?;
    io::write_json(&dir.join("notes.json"), REPORT_SCHEMA, &a.notes)?;
    io::write_json(&values_path(out), VALUES_SCHEMA, &a.values)?;
    Ok(a)
}

pub fn load_values(path: &Path) -> Result<Values> {
    io::read_json(path, VALUES_SCHEMA)
}
