//! AdamW with decoupled weight decay, and SGD with the same multiplicative decay.

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adamw,
    SgdWd,
}

/// Hyperparameters; `beta1`, `beta2`, `eps` are ignored by SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub eta: f64,
    pub lambda: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adamw(eta: f64, lambda: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adamw,
            eta,
            lambda,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd_wd(eta: f64, lambda: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdWd,
            ..Self::adamw(eta, lambda)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.eta) && self.eta > 0.0 && ok(self.lambda)) {
            return Err(invalid("eta must be positive and lambda non-negative"));
        }
        if self.eta * self.lambda >= 1.0 {
            return Err(invalid(format!(
                "eta·lambda = {} must be < 1",
                self.eta * self.lambda
            )));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && ok(self.eps)) {
            return Err(invalid("betas must lie in [0, 1) and eps ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    /// β₁ᵗ and β₂ᵗ, carried multiplicatively so resumed runs match exactly.
    pub beta1_pow: f64,
    pub beta2_pow: f64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, n: usize) -> Result<Self> {
        config.validate()?;
        let moments = if config.kind == OptimizerKind::Adamw {
            n
        } else {
            0
        };
        Ok(OptimizerState {
            config,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            t: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        })
    }

    pub fn eta(&self) -> f64 {
        self.config.eta
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda
    }

    /// Current decay coefficient; zeroed in place by the wd-freeze intervention.
    pub fn set_lambda(&mut self, lambda: f64) {
        self.config.lambda = lambda;
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        match self.config.kind {
            OptimizerKind::Adamw => adamw_step(theta, grad, self),
            OptimizerKind::SgdWd => sgd_wd_step(theta, grad, self),
        }
    }
}

fn check(theta: &[f64], grad: &[f64], opt: &OptimizerState, kind: OptimizerKind) -> Result<()> {
    if opt.config.kind != kind {
        return Err(invalid("optimizer kind mismatch"));
    }
    if theta.len() != grad.len() {
        return Err(invalid("theta and grad differ in length"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { step: opt.t });
    }
    Ok(())
}

/// θ ← (1−ηλ)θ − η·m̂/(√v̂ + ε).
pub fn adamw_step(theta: &mut [f64], grad: &[f64], opt: &mut OptimizerState) -> Result<()> {
    check(theta, grad, opt, OptimizerKind::Adamw)?;
    if opt.m.len() != theta.len() {
        return Err(invalid("moment buffers do not match theta"));
    }
    let c = opt.config;
    opt.t += 1;
    opt.beta1_pow *= c.beta1;
    opt.beta2_pow *= c.beta2;
    let bc1 = 1.0 - opt.beta1_pow;
    let bc2 = 1.0 - opt.beta2_pow;
    let decay = 1.0 - c.eta * c.lambda;
    for i in 0..theta.len() {
        let g = grad[i];
        opt.m[i] = c.beta1 * opt.m[i] + (1.0 - c.beta1) * g;
        opt.v[i] = c.beta2 * opt.v[i] + (1.0 - c.beta2) * g * g;
        let mhat = opt.m[i] / bc1;
        let vhat = opt.v[i] / bc2;
        theta[i] = decay * theta[i] - c.eta * mhat / (vhat.sqrt() + c.eps);
    }
    Ok(())
}

/// θ ← (1−ηλ)θ − η∇L.
pub fn sgd_wd_step(theta: &mut [f64], grad: &[f64], opt: &mut OptimizerState) -> Result<()> {
    check(theta, grad, opt, OptimizerKind::SgdWd)?;
    let c = opt.config;
    opt.t += 1;
    let decay = 1.0 - c.eta * c.lambda;
    for (t, g) in theta.iter_mut().zip(grad) {
        *t = decay * *t - c.eta * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{linalg::norm_sq, RngState};
    use proptest::prelude::*;

    #[test]
    fn zero_grad_adamw_is_pure_decay() {
        let mut o = OptimizerState::new(OptimizerConfig::adamw(1e-3, 1.0), 3).unwrap();
        let mut th = vec![1.0, -2.0, 0.5];
        let before = th.clone();
        adamw_step(&mut th, &[0.0; 3], &mut o).unwrap();
        for (a, b) in th.iter().zip(&before) {
            assert_eq!(*a, 0.999 * b);
        }
        assert!(o.m.iter().chain(&o.v).all(|&x| x == 0.0));
    }

    #[test]
    fn first_adamw_step_moves_by_sign() {
        let c = OptimizerConfig {
            eps: 0.0,
            ..OptimizerConfig::adamw(1e-3, 1.0)
        };
        let mut o = OptimizerState::new(c, 3).unwrap();
        let mut th = vec![1.0, 1.0, 1.0];
        adamw_step(&mut th, &[0.3, -7.0, 1e-4], &mut o).unwrap();
        let want = [0.999 - 1e-3, 0.999 + 1e-3, 0.999 - 1e-3];
        for (a, w) in th.iter().zip(want) {
            assert!((a - w).abs() < 1e-15, "{a} vs {w}");
        }
    }

    #[test]
    fn adaptive_ratio_bounded_at_first_step_and_in_steady_state() {
        let n = 200;
        let mut o = OptimizerState::new(
            OptimizerConfig {
                lambda: 0.0,
                ..OptimizerConfig::adamw(1.0, 0.0)
            },
            n,
        )
        .unwrap();
        let mut r = RngState::new(5, 0);
        for step in 0..5000 {
            let g: Vec<f64> = (0..n).map(|_| r.normal()).collect();
            let mut th = vec![0.0; n];
            adamw_step(&mut th, &g, &mut o).unwrap();
            // θ starts at 0 with η = 1 and λ = 0, so −θ' is exactly the adaptive ratio.
            if step == 0 || step >= 3000 {
                let worst = th.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(worst <= 1.0 + 1e-9, "step {step}: {worst}");
            }
        }
    }

    #[test]
    fn sgd_examples() {
        let mut o = OptimizerState::new(OptimizerConfig::sgd_wd(1e-3, 1.0), 2).unwrap();
        let mut th = vec![1.0, 0.0];
        sgd_wd_step(&mut th, &[0.0, 1.0], &mut o).unwrap();
        assert_eq!(th, vec![0.999, -0.001]);

        let mut th = vec![6.0, 8.0];
        let v0 = norm_sq(&th);
        for _ in 0..1000 {
            sgd_wd_step(&mut th, &[0.0, 0.0], &mut o).unwrap();
        }
        let drop = (v0 / norm_sq(&th)).ln();
        let want = 2000.0 * -(0.999f64.ln());
        assert!((drop - want).abs() < 1e-9, "{drop} vs {want}");
        assert!((drop - 2.001).abs() < 1e-3);
    }

    #[test]
    fn zero_grad_sgd_contracts_v_exactly() {
        let mut o = OptimizerState::new(OptimizerConfig::sgd_wd(1e-3, 1.0), 2).unwrap();
        let mut th = vec![3.0, 4.0];
        sgd_wd_step(&mut th, &[0.0, 0.0], &mut o).unwrap();
        assert!((norm_sq(&th) - 0.999f64.powi(2) * 25.0).abs() < 1e-12);
    }

    #[test]
    fn construction_rejects_large_decay() {
        assert!(OptimizerState::new(OptimizerConfig::adamw(0.5, 2.0), 1).is_err());
        assert!(OptimizerState::new(OptimizerConfig::sgd_wd(1e-3, 1.0), 1).is_ok());
    }

    #[test]
    fn non_finite_gradient_aborts_with_step() {
        let mut o = OptimizerState::new(OptimizerConfig::adamw(1e-3, 1.0), 1).unwrap();
        adamw_step(&mut [1.0], &[1.0], &mut o).unwrap();
        match adamw_step(&mut [1.0], &[f64::NAN], &mut o) {
            Err(Error::NonFinite { step }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kind_mismatch_rejected() {
        let mut o = OptimizerState::new(OptimizerConfig::sgd_wd(1e-3, 1.0), 1).unwrap();
        assert!(adamw_step(&mut [1.0], &[1.0], &mut o).is_err());
    }

    proptest! {
        #[test]
        fn steps_are_pure_and_v_nonnegative(g in prop::collection::vec(-10.0f64..10.0, 1..8), steps in 1usize..20) {
            let n = g.len();
            let run = || {
                let mut o = OptimizerState::new(OptimizerConfig::adamw(1e-2, 0.5), n).unwrap();
                let mut th = vec![1.0; n];
                for k in 0..steps {
                    let gk: Vec<f64> = g.iter().map(|x| x * (k as f64 - 3.0)).collect();
                    adamw_step(&mut th, &gk, &mut o).unwrap();
                }
                (th, o)
            };
            let (a, oa) = run();
            let (b, ob) = run();
            prop_assert_eq!(a, b);
            prop_assert!(oa.v.iter().all(|&x| x >= 0.0));
            prop_assert_eq!(oa, ob);
        }

        #[test]
        fn zero_grad_adamw_matches_zero_grad_sgd(th in prop::collection::vec(-10.0f64..10.0, 1..8), steps in 1usize..50) {
            let n = th.len();
            let mut a = th.clone();
            let mut s = th.clone();
            let mut oa = OptimizerState::new(OptimizerConfig::adamw(1e-3, 1.0), n).unwrap();
            let mut os = OptimizerState::new(OptimizerConfig::sgd_wd(1e-3, 1.0), n).unwrap();
            let z = vec![0.0; n];
            for _ in 0..steps {
                adamw_step(&mut a, &z, &mut oa).unwrap();
                sgd_wd_step(&mut s, &z, &mut os).unwrap();
            }
            prop_assert_eq!(a, s);
        }
    }
}
