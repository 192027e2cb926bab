use super::*;
use crate::math::RngState;
use crate::models::Arch;
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::trainer::{Intervention, LogRow, RunSummary, TrajectoryLog};
use proptest::prelude::*;

fn row(step: u64, v: f64, train_acc: f64, val_acc: f64, cos: Option<f64>) -> LogRow {
    LogRow {
        step,
        v,
        train_acc,
        val_acc,
        train_loss: 0.0,
        val_loss: 0.0,
        wd_coeff: 1.0,
        cos_to_ref: cos,
    }
}

/// Log every 20 steps to `end`, memorised from `t_mem`, generalising from `t_grok`.
fn synth_log(end: u64, t_mem: u64, t_grok: u64, v: impl Fn(f64) -> f64) -> TrajectoryLog {
    let mut log = TrajectoryLog::default();
    for s in (0..=end).step_by(20) {
        let tr = if s >= t_mem { 1.0 } else { 0.5 };
        let va = if s >= t_grok { 1.0 } else { 0.1 };
        log.push(row(s, v(s as f64), tr, va, (s >= t_mem).then_some(1.0)));
    }
    log
}

fn noise(seed: u64, n: usize, level: f64) -> Vec<f64> {
    let mut r = RngState::new(seed, 7);
    (0..n).map(|_| 1.0 + level * r.normal()).collect()
}

#[test]
fn kappa_recovers_synthetic_rate() {
    let log = synth_log(10_000, 200, 6000, |t| 1e4 * (-2.0 * 0.24 * 1e-3 * t).exp());
    let k = fit_kappa_loglinear(&log, WindowRule::Standard, 100, 1e-3, 1.0).unwrap();
    assert!((k.kappa_ll - 0.24).abs() < 1e-9, "{}", k.kappa_ll);
    assert!((k.r_squared - 1.0).abs() < 1e-12);
    assert_eq!(k.window, (300, 5900));
    assert_eq!(k.kappa_ll, k.slope.abs() / (2.0 * k.eta * k.lambda));
}

#[test]
fn kappa_soft95_window_and_noise() {
    let mut log = synth_log(10_000, 200, 6000, |t| 1e4 * (-2.0 * 0.24 * 1e-3 * t).exp());
    for r in log
        .rows
        .iter_mut()
        .filter(|r| r.step >= 4000 && r.step < 6000)
    {
        r.val_acc = 0.96;
    }
    assert_eq!(
        kappa_window(&log, WindowRule::Soft95, 100).unwrap(),
        (300, 3900)
    );
    let n = noise(3, log.len(), 0.01);
    for (r, e) in log.rows.iter_mut().zip(n) {
        r.v *= e;
    }
    let k = fit_kappa_loglinear(&log, WindowRule::Standard, 100, 1e-3, 1.0).unwrap();
    assert!((k.kappa_ll / 0.24 - 1.0).abs() < 0.05, "{}", k.kappa_ll);
}

#[test]
fn kappa_short_window_errors() {
    let log = synth_log(1000, 200, 320, |t| 1e4 - t);
    assert!(matches!(
        fit_kappa_loglinear(&log, WindowRule::Standard, 100, 1e-3, 1.0),
        Err(crate::Error::WindowTooShort { .. })
    ));
}

#[test]
fn kappa_clean_sgd_limit() {
    for eta_lambda in [1e-4, 1e-3, 1e-2] {
        let cfg = OptimizerConfig::sgd_wd(eta_lambda, 1.0);
        let mut theta: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut opt = OptimizerState::new(cfg, theta.len()).unwrap();
        let zero = vec![0.0; theta.len()];
        let mut log = TrajectoryLog::default();
        for s in 0..=400u64 {
            if s > 0 {
                opt.step(&mut theta, &zero).unwrap();
            }
            log.push(row(s, theta.iter().map(|x| x * x).sum(), 0.0, 0.0, None));
        }
        let k = fit_kappa_window(&log, 0, 400, eta_lambda, 1.0).unwrap();
        let want = (2.0 * (1.0 - eta_lambda).ln()).abs() / (2.0 * eta_lambda);
        assert!(
            (k.kappa_ll - want).abs() < 1e-6,
            "{eta_lambda}: {} vs {want}",
            k.kappa_ll
        );
    }
}

fn kosson_data() -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (0..500).map(|i| 20.0 * i as f64).collect();
    let v = t
        .iter()
        .map(|&t| 0.5 + 100.0 * (-7.4e-4 * t).exp())
        .collect();
    (t, v)
}

#[test]
fn kosson_recovers_noise_free() {
    let (t, v) = kosson_data();
    let c = fit_kosson_series(&t, &v).unwrap();
    assert!((c.rate / 7.4e-4 - 1.0).abs() < 1e-3, "{}", c.rate);
    assert!((c.v_inf / 0.5 - 1.0).abs() < 5e-3, "{}", c.v_inf);
    assert!((c.amplitude / 100.0 - 1.0).abs() < 1e-3);
    assert!(c.converged);
}

#[test]
fn kosson_survives_noise() {
    let (t, mut v) = kosson_data();
    for (x, e) in v.iter_mut().zip(noise(11, 500, 0.01)) {
        *x *= e;
    }
    let c = fit_kosson_series(&t, &v).unwrap();
    assert!((c.rate / 7.4e-4 - 1.0).abs() < 0.05, "{}", c.rate);
}

#[test]
fn kosson_window_shift_and_flags() {
    let log = synth_log(10_000, 0, 20_000, |t| 0.5 + 100.0 * (-7.4e-4 * t).exp());
    let k = fit_kosson(&log, 2000, 8000, 1e-3, 1.0).unwrap();
    assert!((k.amplitude - 100.0 * (-7.4e-4f64 * 2000.0).exp()).abs() < 1e-3 * k.amplitude);
    assert!((k.kappa_kos - 0.37).abs() < 1e-3);
    assert!(fit_kosson_series(&[0.0; 5], &[1.0; 5]).is_err());
    let flat: Vec<f64> = (0..20).map(|i| i as f64).collect();
    assert!(!fit_kosson_series(&flat, &[3.0; 20]).unwrap().converged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn log_linear_rate_underestimates_kosson_rate(v_inf in 0.5f64..50.0, amp in 50.0f64..1e4, kappa in 0.1f64..1.0) {
        let r = 2.0 * kappa * 1e-3;
        let log = synth_log(6000, 0, 100_000, |t| v_inf + amp * (-r * t).exp());
        let kll = fit_kappa_window(&log, 0, 6000, 1e-3, 1.0).unwrap();
        let kos = fit_kosson(&log, 0, 6000, 1e-3, 1.0).unwrap().paired(&kll);
        prop_assert!(kos.v_inf > 0.0);
        prop_assert!(kos.f_window.unwrap() < 1.0);
    }
}

#[test]
fn alpha_saturation_recovers_tau() {
    let t: Vec<f64> = (0..1000).map(|i| 20.0 * i as f64).collect();
    let a: Vec<f64> = t
        .iter()
        .map(|&t| 60.0 * (1.0 - (-t / 4794.0).exp()))
        .collect();
    let s = fit_alpha_saturation(&t, &a, 20.0).unwrap();
    assert!(
        (s.tau / 4794.0 - 1.0).abs() < 1e-3 && (s.alpha_final / 60.0 - 1.0).abs() < 1e-3,
        "{s:?}"
    );
    assert!(s.flag.is_none());
    let noisy: Vec<f64> = a
        .iter()
        .zip(noise(5, 1000, 0.01))
        .map(|(x, e)| x * e)
        .collect();
    let s = fit_alpha_saturation(&t, &noisy, 20.0).unwrap();
    assert!((s.tau / 4794.0 - 1.0).abs() < 0.05, "{s:?}");
}

#[test]
fn alpha_saturation_flags_flat_signatures() {
    let t: Vec<f64> = (0..500).map(|i| 20.0 * i as f64).collect();
    let mut a: Vec<f64> = noise(8, 500, 0.02).into_iter().map(|e| 12.0 * e).collect();
    a[0] = 0.0;
    let s = fit_alpha_saturation(&t, &a, 20.0).unwrap();
    assert!(s.flag.is_some(), "{s:?}");
    let tiny: Vec<f64> = t
        .iter()
        .map(|&t| 0.5 * (1.0 - (-t / 500.0).exp()))
        .collect();
    assert_eq!(
        fit_alpha_saturation(&t, &tiny, 20.0)
            .unwrap()
            .flag
            .as_deref(),
        Some("no angular motion")
    );
}

#[test]
fn timescales_from_log() {
    let mut log = synth_log(20_000, 200, 15_000, |t| 1e4 * (-t / 1182.0).exp());
    for r in log.rows.iter_mut().filter(|r| r.step >= 200) {
        let a = 50f64 * (1.0 - (-((r.step - 200) as f64) / 4794.0).exp());
        r.cos_to_ref = Some(a.to_radians().cos());
    }
    let ts = fit_timescales(&log, 100).unwrap();
    assert!((ts.tau_v.unwrap() / 1182.0 - 1.0).abs() < 1e-9);
    assert!((ts.tau_alpha.unwrap() / 4794.0 - 1.0).abs() < 1e-3);
    assert!((ts.ratio.unwrap() - 1182.0 / 4794.0).abs() < 1e-3);
}

#[test]
fn crossing_interpolates_and_snaps() {
    let mut log = TrajectoryLog::default();
    log.push(row(0, 2400.0, 1.0, 0.4, Some(1.0)));
    log.push(row(20, 2200.0, 1.0, 0.6, Some(0.0)));
    let c = measure_crossing(&log, 0.5).unwrap();
    assert_eq!((c.step, c.v_star), (10.0, 2300.0));
    assert!((c.alpha_star.unwrap() - 45.0).abs() < 1e-12);
    log.rows[1].val_acc = 0.5;
    assert_eq!(measure_crossing(&log, 0.5).unwrap().v_star, 2200.0);
    assert!(measure_crossing(&log, 0.9).is_none());
    log.rows[0].cos_to_ref = None;
    assert_eq!(measure_crossing(&log, 0.45).unwrap().alpha_star, None);
}

const C_TABLE: [(u64, f64, f64, f64); 5] = [
    (53, 85.4, 73.4, 81.9),
    (67, 94.5, 64.6, 85.4),
    (89, 107.2, 49.5, 81.5),
    (97, 111.2, 47.8, 82.4),
    (113, 118.9, 44.3, 83.1),
];

fn c_cells() -> Vec<CCell> {
    C_TABLE
        .iter()
        .map(|&(p, s, a, _)| CCell {
            p,
            sqrt_v_tmem: s,
            alpha_star_deg: a,
        })
        .collect()
}

#[test]
fn c_form_reference_table() {
    let cal = calibrate_c(&c_cells()).unwrap();
    for ((_, c), &(_, _, _, want)) in cal.per_cell.iter().zip(&C_TABLE) {
        assert!((c - want).abs() < 0.1, "{c} vs {want}");
    }
    assert!(
        (cal.mean - 82.8).abs() < 0.05 && (cal.std - 1.4).abs() < 0.05,
        "{cal:?}"
    );
    assert!((100.0 * cal.cv - 1.7).abs() < 0.05);

    let c89 = calibrate_c(&c_cells()[2..3]).unwrap().mean;
    let (deg, flag) = alpha_star_c_form(c89, 111.2);
    assert!((deg - 47.15).abs() < 0.01 && flag.is_none(), "{deg}");
    let c53 = calibrate_c(&c_cells()[0..1]).unwrap().mean;
    assert!((alpha_star_c_form(c53, 118.9).0 - 43.51).abs() < 0.1);
    assert!((alpha_star_c_form(81.5, 111.2).0 - 47.15).abs() < 0.05);
    assert!((alpha_star_c_form(81.9, 118.9).0 - 43.5).abs() < 0.05);
    let m = AlphaStarModel {
        m_q: 1.0,
        g_eff: 1.0,
        eps_lin: 0.0,
        eps_hom: 0.0,
        c: Some(81.5),
        factor: MarginFactor::One,
    };
    assert!(
        (alpha_star_from_constants(&m, 111.2 * 111.2)
            .unwrap()
            .c_form_degrees
            .unwrap()
            - 47.15)
            .abs()
            < 0.05
    );
}

#[test]
fn alpha_star_power_law_reference() {
    let p: Vec<f64> = C_TABLE.iter().map(|r| r.0 as f64).collect();
    let a: Vec<f64> = C_TABLE.iter().map(|r| r.2).collect();
    let f = power_law_fit(&p, &a, 0, 0).unwrap();
    assert!((f.b + 0.71).abs() < 0.02 && f.r_squared >= 0.98, "{f:?}");
}

#[test]
fn v_star_scaling_reference() {
    let p = [53.0, 67.0, 89.0, 97.0, 113.0];
    let v = [1158.0, 1427.0, 2170.0, 2301.0, 3390.0];
    let s = compare_scaling_forms(&p, &v, 2000, 1).unwrap();
    let (lo, hi) = s.power.b_ci95.unwrap();
    assert!(lo < s.power.b && s.power.b < hi, "{s:?}");
    assert!(
        hi - lo > 0.5,
        "interval should be wide with five points: {lo} {hi}"
    );
    assert!(s.linear.r_squared > 0.85 && s.power.r_squared > 0.9);
}

#[test]
fn power_law_exact_and_bad_inputs() {
    let x = [1.0f64, 2.0, 3.0, 5.0, 8.0];
    let y: Vec<f64> = x.iter().map(|x| 3.0 * x.powf(-2.0)).collect();
    let f = power_law_fit(&x, &y, 200, 3).unwrap();
    assert!((f.a - 3.0).abs() < 1e-9 && (f.b + 2.0).abs() < 1e-9);
    let (lo, hi) = f.b_ci95.unwrap();
    assert!((lo + 2.0).abs() < 1e-9 && (hi + 2.0).abs() < 1e-9);
    assert!(power_law_fit(&[1.0, 0.0, 2.0], &[1.0, 1.0, 1.0], 0, 0).is_err());
    assert!(power_law_fit(&[1.0, 2.0], &[1.0, 1.0], 0, 0).is_err());
}

#[test]
fn overshoot_law_exact() {
    let runs: Vec<(f64, f64)> = [0.3, 0.45, 0.6, 0.8, 0.95, 1.0]
        .iter()
        .map(|&r: &f64| (r, 0.025 * r.powf(-5.51)))
        .collect();
    let f = fit_overshoot_law(&runs, 0, 0).unwrap();
    assert!((f.b + 5.51).abs() < 1e-6 && (f.a - 0.025).abs() < 1e-9);
    assert!((f.eval(0.5) - 1.14).abs() < 0.005);
    assert!(f.eval(0.4) > f.eval(0.6));
    assert!(fit_overshoot_law(&runs[..4], 0, 0).is_err());
}

fn summary(t_mem: Option<u64>, t95: Option<u64>, t99: Option<u64>) -> RunSummary {
    RunSummary {
        t_mem,
        t_mem_loss: None,
        t_grok_99: t99,
        t_grok_95: t95,
        v0: 1.0,
        v_mem: None,
        v_post: None,
        v_post_method: None,
        grokked: t99.is_some(),
        alpha_final: None,
        intervention: Intervention::None,
        intervention_step: None,
        freeze_max_rel_dev: None,
        freeze_rel_std: None,
        diverged_at: None,
        steps_run: 0,
        stopped_early: false,
        final_train_acc: 1.0,
        final_val_acc: 1.0,
        num_params: 1,
    }
}

#[test]
fn overshoot_metrics_cases() {
    let log = synth_log(2000, 0, 0, |t| 1000.0 - 0.2 * t);
    let m = overshoot_metrics(&log, &summary(Some(100), Some(500), Some(900))).unwrap();
    assert_eq!(m.v_max_post, 900.0);
    assert!((m.rho_drop - 600.0 / 900.0).abs() < 1e-12);
    assert!((m.extra_delay_ratio.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(m.regrowth_factor, 1.0);

    let dip = |t: f64| {
        if t <= 1000.0 {
            1000.0 - 0.6 * t
        } else {
            400.0 + 0.5 * (t - 1000.0)
        }
    };
    let log = synth_log(2000, 0, 0, dip);
    let m = overshoot_metrics(&log, &summary(Some(0), Some(400), None)).unwrap();
    assert_eq!((m.v_at_t95, m.v_min_post), (760.0, 400.0));
    assert!((m.rho_drop - 400.0 / 760.0).abs() < 1e-12);
    assert!((m.regrowth_factor - 900.0 / 400.0).abs() < 1e-12);
    assert_eq!(m.extra_delay_ratio, None);
    assert!(!m.flags.is_empty());
    assert!(overshoot_metrics(&log, &summary(Some(0), None, None)).is_err());
}

fn cell(arch: Arch, p: u64, eta: f64, lambda: f64) -> CellId {
    CellId {
        task: "add".into(),
        arch,
        p,
        eta,
        lambda,
    }
}

fn record(
    c: &CellId,
    seed: u64,
    kappa: f64,
    v_star: f64,
    v_mem: f64,
    t_mem: u64,
    t_grok: u64,
) -> RunRecord {
    RunRecord {
        cell: c.clone(),
        seed,
        t_mem: Some(t_mem),
        t_grok: Some(t_grok),
        t_grok_95: Some(t_grok),
        v_mem: Some(v_mem),
        v_post: Some(v_star * 0.5),
        kappa: Some(kappa),
        kappa_r2: Some(0.99),
        v_star: Some(v_star),
        alpha_star: Some(45.0),
        tau_v: Some(1000.0),
        tau_alpha: Some(4000.0),
        alpha_final: Some(60.0),
    }
}

/// A run whose T_grok matches the law with the given constants exactly.
fn lawful(c: &CellId, seed: u64, kappa: f64, v_star: f64, v_mem: f64) -> RunRecord {
    let d = predict_delay_b(kappa, v_star, c.eta, c.lambda, v_mem)
        .unwrap()
        .steps
        .round() as u64;
    record(c, seed, kappa, v_star, v_mem, 100, 100 + d)
}

#[test]
fn tiers_assigned_by_distance() {
    let base = cell(Arch::Transformer1, 23, 1e-3, 1.0);
    assert_eq!(tier_of(&base, &base), None);
    assert_eq!(
        tier_of(&base, &cell(Arch::Transformer1, 23, 1e-3, 2.0)),
        Some(1)
    );
    assert_eq!(tier_of(&base, &cell(Arch::Mlp, 23, 1e-3, 1.0)), Some(2));
    assert_eq!(tier_of(&base, &cell(Arch::Mlp, 29, 1e-3, 1.0)), Some(3));
    assert_eq!(
        tier_of(&base, &cell(Arch::Transformer1, 29, 1e-3, 1.0)),
        Some(3)
    );
}

#[test]
fn three_tier_report_on_lawful_runs() {
    let base = cell(Arch::Transformer1, 23, 1e-3, 1.0);
    let mut runs: Vec<RunRecord> = (0..3)
        .map(|s| lawful(&base, s, 0.3, 2000.0, 8000.0))
        .collect();
    assert!(three_tier_report(&runs, &base).unwrap().tiers.is_empty());
    let cells = [
        cell(Arch::Transformer1, 23, 1e-3, 2.0),
        cell(Arch::Mlp, 23, 1e-3, 1.0),
        cell(Arch::Transformer1, 29, 2e-3, 1.0),
    ];
    for c in &cells {
        runs.extend((0..3).map(|s| lawful(c, s, 0.3, 2000.0, 7000.0 + 500.0 * s as f64)));
    }
    let r = three_tier_report(&runs, &base).unwrap();
    assert_eq!(r.calibration.kappa_train, 0.3);
    assert_eq!(
        r.tiers.iter().map(|t| (t.tier, t.n)).collect::<Vec<_>>(),
        vec![(1, 3), (2, 6), (3, 9)]
    );
    for t in &r.tiers {
        assert!(t.mape_b.unwrap() < 0.1, "{t:?}");
    }
    assert_eq!(r.cells.len(), 3);
    assert!(r
        .cells
        .iter()
        .all(|c| c.n == 3 && c.median_t_grok.is_some()));
    // Too few qualifying calibration runs.
    assert!(three_tier_report(&runs[1..], &base).is_err());
}

#[test]
fn cell_statistics_within_vs_pooled() {
    let a = cell(Arch::Transformer1, 23, 1e-3, 1.0);
    let b = cell(Arch::Transformer1, 23, 1e-3, 2.0);
    let mut runs: Vec<RunRecord> = (0..3)
        .map(|s| record(&a, s, 0.2, 2000.0, 8000.0, 100, 3000))
        .collect();
    runs.extend((0..3).map(|s| record(&b, s, 0.3, 2000.0, 8000.0, 100, 2000)));
    let st = cell_statistics(&runs);
    assert!(st.within_cell_median_kappa_cv.unwrap() < 1e-12);
    assert!(st.pooled_kappa.unwrap().cv.unwrap() > 0.15);
    assert_eq!(st.cells[0].v_star_ratio, Some(0.25));
    let single = cell_statistics(&runs[..1]);
    assert_eq!(single.cells[0].kappa.as_ref().unwrap().cv, None);
    let mut poor = runs[0].clone();
    poor.kappa_r2 = Some(0.5);
    assert!(cell_statistics(&[poor]).cells[0].kappa.is_none());
}

#[test]
fn ratio_stability_cv() {
    let ratios = [0.17, 0.2, 0.23, 0.15, 0.24];
    let cells: Vec<CellSummary> = ratios
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let c = cell(Arch::Transformer1, 23 + i as u64, 1e-3, 1.0);
            let runs = [record(&c, 0, 0.2, 1000.0 * r, 1000.0, 0, 10)];
            summarize_cell(c, &runs.iter().collect::<Vec<_>>())
        })
        .collect();
    let rs = ratio_stability(&cells);
    assert_eq!(rs.len(), 1);
    let want = std_pop(&ratios) / mean(&ratios);
    assert!((rs[0].cv.unwrap() - want).abs() < 0.01, "{rs:?}");
    assert_eq!(rs[0].range, (0.15, 0.24));
    let same: Vec<CellSummary> = (0..3).map(|_| cells[0].clone()).collect();
    assert!(ratio_stability(&same)[0].cv.unwrap() < 1e-12);
}

#[test]
fn loocv_identical_and_outlier() {
    let c = cell(Arch::Transformer1, 23, 1e-3, 1.0);
    let same: Vec<RunRecord> = (0..4)
        .map(|s| lawful(&c, s, 0.25, 2000.0, 8000.0))
        .collect();
    let r = loocv_calibration(&same).unwrap();
    assert_eq!((r.v_star_variation_pct, r.kappa_variation_pct), (0.0, 0.0));
    let mut odd = same.clone();
    odd.push(lawful(&c, 9, 0.6, 2000.0, 8000.0));
    odd[1].kappa = Some(0.26);
    odd[2].kappa = Some(0.24);
    let r = loocv_calibration(&odd).unwrap();
    let err: Vec<f64> = r.folds.iter().map(|f| f.error_pct.unwrap()).collect();
    let worst = err
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(worst, 4, "{r:?}");
    assert!(err[..4].iter().all(|&e| e < 0.1 * err[4]), "{r:?}");
    assert!(r.kappa_variation_pct > 0.0);
    assert!(loocv_calibration(&same[..2]).is_err());
}
