use super::*;
use crate::analysis::fit_kosson_series;

#[test]
fn zero_remainder_closed_form() {
    let cfg = RecursionConfig::new(7.0, 1e-3, 1.0, 0.0, RemainderPolicy::Zero, 500);
    let s = simulate_contraction(&cfg).unwrap();
    assert!((s[500] / (7.0 * 0.999f64.powi(1000)) - 1.0).abs() < 1e-12);
}

#[test]
fn remainder_respects_bound_and_log_decrement_band() {
    for policy in RemainderPolicy::ALL {
        let cfg = RecursionConfig {
            seed: 4,
            ..RecursionConfig::new(1.0, 1e-3, 1.0, 0.5, policy, 1000)
        };
        let s = simulate_contraction(&cfg).unwrap();
        let a = cfg.contraction();
        for w in s.windows(2) {
            assert!(
                (w[1] - a * w[0]).abs() <= cfg.remainder_bound(w[0]) * (1.0 + 1e-12) + 1e-15 * w[0]
            );
            let d = (w[1] / w[0]).ln();
            let (e, l) = (cfg.eta, cfg.lambda);
            assert!(
                d >= -2.0 * e * l * (1.0 + 5.0 * e) && d <= -2.0 * e * l * (1.0 - 5.0 * e),
                "{policy:?} {d}"
            );
        }
    }
}

#[test]
fn random_sign_trajectories_decrease() {
    for seed in 0..100 {
        let cfg = RecursionConfig {
            seed,
            ..RecursionConfig::new(3.0, 1e-2, 1.0, 0.9, RemainderPolicy::RandomSign, 300)
        };
        let s = simulate_contraction(&cfg).unwrap();
        assert!(s.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn crossing_time_closed_form() {
    let cfg = RecursionConfig::new(1.0, 1e-3, 1.0, 0.0, RemainderPolicy::Zero, 3000);
    let s = simulate_contraction(&cfg).unwrap();
    let want = (2.0 / (2.0 * 0.999f64.ln().abs())).ceil() as u64;
    assert_eq!(want, 1000);
    assert_eq!(crossing_time(&s, (-2.0f64).exp()), Some(want));
    assert_eq!(crossing_time(&s, 1.0), Some(0));
    assert_eq!(crossing_time(&s, 1e-9), None);
}

#[test]
fn theta_band_for_all_policies() {
    for policy in RemainderPolicy::ALL {
        let cfg = RecursionConfig {
            seed: 1,
            ..RecursionConfig::new(1.0, 1e-3, 1.0, 0.9, policy, 5000)
        };
        let t = crossing_time(&simulate_contraction(&cfg).unwrap(), 0.05).unwrap() as f64;
        let p = predicted_crossing(1.0, 0.05, 1e-3, 1.0);
        assert!((t / p - 1.0).abs() <= 5.0 * 1e-3, "{policy:?} {t} {p}");
    }
}

#[test]
fn bound_grid_single_band() {
    let r = bound_grid(0).unwrap();
    assert_eq!(r.points.len(), 3 * 4 * 3 * 2);
    assert!(r.k_fit <= 10.0, "K = {}", r.k_fit);
    for &(c1, spread) in &r.scaling_spread {
        let limit = if c1 == 0.0 { 0.01 } else { 0.1 };
        assert!(spread < limit, "c1={c1}: {spread}");
    }
}

#[test]
fn necessity_dichotomy() {
    let cfg = RecursionConfig {
        seed: 2,
        ..RecursionConfig::new(1.0, 1e-3, 1.0, 0.9, RemainderPolicy::MaxPositive, 10_000)
    };
    let v = necessity_check(5.0, 5.0, &cfg).unwrap();
    assert!(v.holds && v.delay == Some(0) && v.max_v_over_post <= 1.0);
    for policy in RemainderPolicy::ALL {
        let c = RecursionConfig { policy, ..cfg };
        let v = necessity_check(3.0, 5.0, &c).unwrap();
        assert!(
            v.holds && v.max_v_over_post <= 1.0 && v.delay == Some(0),
            "{policy:?}"
        );
        let v = necessity_check(20.0, 5.0, &c).unwrap();
        let d = v.delay.unwrap() as f64;
        assert!(v.holds && d > 0.0);
        assert!(
            (d / v.predicted_delay - 1.0).abs() < 5e-3,
            "{policy:?} {d} {}",
            v.predicted_delay
        );
    }
}

#[test]
fn kosson_fixed_point() {
    let k = simulate_kosson(2.0, 1e-3, 1.0, 1000.0, 200_000).unwrap();
    assert!(k.converged);
    assert!((k.exact - 0.50025).abs() < 1e-5, "{}", k.exact);
    assert!((k.exact - 1e-6 * 1000.0 / (1.0 - 0.999f64 * 0.999)).abs() < 1e-12);
    assert!(
        (k.fixed_point - k.exact).abs() < 1e-12,
        "{} {}",
        k.fixed_point,
        k.exact
    );
    assert_eq!(k.approx, 0.5);
    assert!(((k.exact - k.approx) / k.approx).abs() <= 1e-3);

    let half = simulate_kosson(2.0, 1e-3, 2.0, 1000.0, 200_000).unwrap();
    assert!((half.fixed_point / k.fixed_point - 0.5).abs() < 2e-3);
}

#[test]
fn kosson_fit_recovers_simulated_asymptote() {
    let k = simulate_kosson(100.0, 1e-3, 1.0, 1000.0, 5000).unwrap();
    let t: Vec<f64> = (0..=5000).step_by(20).map(|i| i as f64).collect();
    let v: Vec<f64> = t.iter().map(|&i| k.series[i as usize]).collect();
    let fit = fit_kosson_series(&t, &v).unwrap();
    assert!((fit.v_inf / k.exact - 1.0).abs() < 5e-3, "{fit:?}");
}

fn radial_series(eps_max: f64, eta_lambda: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = RngState::new(3, 0);
    let post: Vec<f64> = (0..20).map(|_| r.normal()).collect();
    let u: Vec<f64> = (0..20).map(|_| r.normal()).collect();
    let (np, nu) = (norm_sq(&post).sqrt(), norm_sq(&u).sqrt());
    // Start far out and stop before ‖θ_post‖/‖θ_t‖ exceeds eps_max.
    let mut x = 50.0 * np / nu / eps_max;
    let mut out = Vec::new();
    loop {
        let th: Vec<f64> = post.iter().zip(&u).map(|(p, d)| p + x * d).collect();
        if np / norm_sq(&th).sqrt() > eps_max {
            break;
        }
        out.push(th);
        x *= 1.0 - eta_lambda;
    }
    (out, post)
}

#[test]
fn rate_preservation() {
    let (s, post) = radial_series(0.2, 1e-3);
    let zero = vec![0.0; post.len()];
    assert_eq!(
        rate_preservation_check(&s, &zero, 1e-3).unwrap().max_gap,
        0.0
    );
    let mut gaps = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let (s, post) = radial_series(eps, 1e-3);
        let r = rate_preservation_check(&s, &post, 1e-3).unwrap();
        assert!(r.max_eps <= eps && r.k_fit.unwrap() <= 10.0, "{r:?}");
        gaps.push(r.max_gap);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(rate_preservation_check(&s[..1], &post, 1e-3).is_err());
}

#[test]
fn config_validation() {
    assert!(
        RecursionConfig::new(1.0, 1.0, 1.0, 0.0, RemainderPolicy::Zero, 1)
            .validate()
            .is_err()
    );
    assert!(
        RecursionConfig::new(1.0, 1e-3, 1.0, 1.0, RemainderPolicy::Zero, 1)
            .validate()
            .is_err()
    );
    assert!(
        RecursionConfig::new(0.0, 1e-3, 1.0, 0.0, RemainderPolicy::Zero, 1)
            .validate()
            .is_err()
    );
}

#[test]
fn single_point_grid() {
    let g = BoundGrid {
        eta: vec![1e-3],
        lambda: vec![1.0],
        c1: vec![0.0],
        policies: vec![RemainderPolicy::Zero],
    };
    let r = bound_grid_over(&g, 0).unwrap();
    assert_eq!(r.points.len(), 1);
    assert_eq!(r.points[0].measured, 1000);
    assert_eq!(r.scaling_spread, vec![(0.0, 0.0)]);
}

#[test]
fn grid_rejects_eta_lambda_at_one() {
    let g = BoundGrid {
        eta: vec![0.5],
        lambda: vec![2.0],
        c1: vec![0.0],
        policies: vec![RemainderPolicy::Zero],
    };
    assert!(bound_grid_over(&g, 0).is_err());
    let empty = BoundGrid {
        c1: vec![],
        ..BoundGrid::default()
    };
    assert!(bound_grid_over(&empty, 0).is_err());
}
