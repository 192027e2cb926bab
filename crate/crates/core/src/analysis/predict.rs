//! First-passage delay predictions.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayPrediction {
    pub steps: f64,
    /// The raw value was negative and has been replaced by 0.
    pub clamped: bool,
}

fn kernel(log_ratio: f64, kappa: f64, eta: f64, lambda: f64) -> DelayPrediction {
    let raw = log_ratio / (2.0 * kappa * eta * lambda);
    if raw < 0.0 {
        DelayPrediction {
            steps: 0.0,
            clamped: true,
        }
    } else {
        DelayPrediction {
            steps: raw,
            clamped: false,
        }
    }
}

fn check_positive(pairs: &[(&str, f64)]) -> Result<()> {
    match pairs.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        Some((name, v)) => Err(invalid(format!("{name} must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// Architecture-level gate: ln(V_mem / V⋆) / (2κηλ).
pub fn predict_delay_b(
    kappa: f64,
    v_star: f64,
    eta: f64,
    lambda: f64,
    v_mem: f64,
) -> Result<DelayPrediction> {
    check_positive(&[
        ("kappa", kappa),
        ("V_star", v_star),
        ("eta", eta),
        ("lambda", lambda),
        ("V_mem", v_mem),
    ])?;
    Ok(kernel((v_mem / v_star).ln(), kappa, eta, lambda))
}

/// Norm-separation form: ln(V_mem / V_post) / (2κηλ).
pub fn predict_delay_a(
    kappa: f64,
    eta: f64,
    lambda: f64,
    v_mem: f64,
    v_post: f64,
) -> Result<DelayPrediction> {
    check_positive(&[
        ("kappa", kappa),
        ("eta", eta),
        ("lambda", lambda),
        ("V_mem", v_mem),
        ("V_post", v_post),
    ])?;
    Ok(kernel((v_mem / v_post).ln(), kappa, eta, lambda))
}
