//! `emit-figures`: columnar text for the collapse, κ table, phase plane and overshoot scatter.

use crate::campaign::{load_manifest, load_trajectory, Manifest};
use crate::io::{self, REPORT_SCHEMA, TABLE_SCHEMA};
use crate::reports::{reports_dir, CellsReport, OvershootReport};
use anyhow::Result;
use grokking_core::analysis::CROSSING_ACC;
use grokking_core::trainer::{detect_t_mem, MemMode, TrajectoryLog};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const FIGURE_FILES: [&str; 4] = [
    "collapse.tsv",
    "kappa.tsv",
    "phase_plane.tsv",
    "overshoot.tsv",
];

pub fn figures_dir(out: &Path) -> PathBuf {
    out.join("figures")
}

fn na(x: Option<f64>) -> String {
    x.map_or("NA".into(), |v| format!("{v}"))
}

struct Curve {
    label: String,
    /// (τ, V/V_mem) from T_mem on.
    points: Vec<(f64, f64)>,
    dtau: f64,
}

fn curve(
    label: String,
    log: &TrajectoryLog,
    eta: f64,
    lambda: f64,
    threshold: f64,
) -> Option<Curve> {
    let tm = detect_t_mem(log, MemMode::Acc, threshold)?;
    let vm = log.row_at(tm)?.v;
    let points: Vec<(f64, f64)> = log
        .rows
        .iter()
        .filter(|r| r.step >= tm)
        .map(|r| (2.0 * eta * lambda * (r.step - tm) as f64, r.v / vm))
        .collect();
    let dtau = points.get(1).map(|p| p.0)?;
    Some(Curve {
        label,
        points,
        dtau,
    })
}

/// Linear interpolation in log V between logged rows; `None` outside the run.
fn sample(c: &Curve, tau: f64) -> Option<f64> {
    let eps = 1e-9 * c.dtau;
    let i = c.points.partition_point(|p| p.0 < tau - eps);
    let hi = *c.points.get(i)?;
    if (hi.0 - tau).abs() <= eps {
        return Some(hi.1);
    }
    if i == 0 {
        return None;
    }
    let lo = c.points[i - 1];
    let w = (tau - lo.0) / (hi.0 - lo.0);
    Some((lo.1.ln() * (1.0 - w) + hi.1.ln() * w).exp())
}

fn collapse(curves: &[Curve]) -> String {
    let mut s = String::from("tau");
    for c in curves {
        s.push('\t');
        s.push_str(&c.label);
    }
    s.push('\n');
    let Some(dtau) = curves.iter().map(|c| c.dtau).reduce(f64::min) else {
        return s;
    };
    let tmax = curves
        .iter()
        .filter_map(|c| c.points.last().map(|p| p.0))
        .fold(0.0, f64::max);
    let n = (tmax / dtau + 1e-9).floor() as usize;
    for k in 0..=n {
        let tau = k as f64 * dtau;
        write!(s, "{tau}").unwrap();
        for c in curves {
            write!(s, "\t{}", na(sample(c, tau))).unwrap();
        }
        s.push('\n');
    }
    s
}

fn phase_plane(rows: &[(String, &TrajectoryLog, f64)]) -> String {
    let mut s = String::from("run\tstep\tV\talpha_deg\tmarker\n");
    for (label, log, threshold) in rows {
        let Some(tm) = detect_t_mem(log, MemMode::Acc, *threshold) else {
            continue;
        };
        let crossing = log
            .rows
            .iter()
            .find(|r| r.val_acc >= CROSSING_ACC)
            .map(|r| r.step);
        for r in log.rows.iter().filter(|r| r.step >= tm) {
            let mut marks = Vec::new();
            if r.step == tm {
                marks.push("t_mem");
            }
            if Some(r.step) == crossing {
                marks.push("crossing");
            }
            writeln!(
                s,
                "{label}\t{}\t{}\t{}\t{}",
                r.step,
                r.v,
                na(r.alpha_deg()),
                if marks.is_empty() {
                    "-".into()
                } else {
                    marks.join(",")
                }
            )
            .unwrap();
        }
    }
    s
}

fn kappa_table(cells: Option<&CellsReport>) -> String {
    let mut s = String::from("task\tarch\tp\teta\tlambda\tn\tkappa_median\tkappa_q25\tkappa_q75\n");
    for c in cells.map_or(&[][..], |c| &c.statistics.cells) {
        let id = &c.cell;
        let (n, med, lo, hi) = c.kappa.as_ref().map_or((0, None, None, None), |k| {
            (k.n, Some(k.median), Some(k.iqr.0), Some(k.iqr.1))
        });
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{n}\t{}\t{}\t{}",
            id.task,
            id.arch.name(),
            id.p,
            id.eta,
            id.lambda,
            na(med),
            na(lo),
            na(hi)
        )
        .unwrap();
    }
    s
}

fn overshoot_table(o: Option<&OvershootReport>) -> String {
    let mut s = String::from("cell\tseed\trho\trho_drop\tregrowth_factor\textra_delay_ratio\n");
    for r in o.map_or(&[][..], |o| &o.rows) {
        let m = &r.metrics;
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.cell,
            r.seed,
            na(r.rho),
            m.rho_drop,
            m.regrowth_factor,
            na(m.extra_delay_ratio)
        )
        .unwrap();
    }
    s
}

/// Writes every figure file under `out/figures`; anything missing yields a header-only file.
pub fn cmd_emit_figures(out: &Path) -> Result<Vec<PathBuf>> {
    let manifest: Option<Manifest> = load_manifest(out).ok();
    let dir = reports_dir(out);
    let cells: Option<CellsReport> = io::read_json(&dir.join("cells.json"), REPORT_SCHEMA).ok();
    let overshoot: Option<OvershootReport> =
        io::read_json(&dir.join("overshoot.json"), REPORT_SCHEMA).ok();

    let mut logs = Vec::new();
    for r in manifest.iter().flat_map(|m| &m.runs) {
        if let Ok(log) = load_trajectory(out, &r.run_id) {
            logs.push((
                format!("{}:{}", r.cell, r.seed),
                log,
                r.config.optimizer.eta,
                r.config.optimizer.lambda,
                r.config.thresholds.acc_mem,
            ));
        }
    }
    let curves: Vec<Curve> = logs
        .iter()
        .filter_map(|(l, log, e, w, t)| curve(l.clone(), log, *e, *w, *t))
        .collect();
    let plane: Vec<(String, &TrajectoryLog, f64)> = logs
        .iter()
        .map(|(l, log, _, _, t)| (l.clone(), log, *t))
        .collect();

    let bodies = [
        collapse(&curves),
        kappa_table(cells.as_ref()),
        phase_plane(&plane),
        overshoot_table(overshoot.as_ref()),
    ];
    let fdir = figures_dir(out);
    let mut written = Vec::new();
    for (name, body) in FIGURE_FILES.iter().zip(bodies) {
        let p = fdir.join(name);
        io::write_versioned(&p, TABLE_SCHEMA, &body)?;
        written.push(p);
    }
    Ok(written)
}
