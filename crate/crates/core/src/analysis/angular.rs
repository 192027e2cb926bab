//! Angular threshold: quantile margins, the constant-based bound and the C-form.

use super::stats::{mean, std_pop};
use crate::error::{invalid, Error, Result};
use crate::models::MarginReport;
use serde::{Deserialize, Serialize};

/// Smallest m with at least a q-fraction of S₋ satisfying |margin| ≤ m.
pub fn quantile_margin(margins: &[MarginReport], q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid(format!("q must lie in (0, 1], got {q}")));
    }
    let mut abs: Vec<f64> = margins
        .iter()
        .filter(|m| m.misclassified)
        .map(|m| m.margin.abs())
        .collect();
    if abs.is_empty() {
        return Err(Error::NoMisclassified);
    }
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let k = (1..=n).find(|&k| k as f64 / n as f64 >= q).unwrap_or(n);
    Ok(abs[k - 1])
}

pub fn q_delta(p_chance: f64, q_grok: f64) -> Result<f64> {
    if !(0.0 <= p_chance && p_chance < q_grok && q_grok <= 1.0) {
        return Err(invalid(format!(
            "need 0 ≤ p_chance < q_grok ≤ 1, got {p_chance}, {q_grok}"
        )));
    }
    Ok((q_grok - p_chance) / (1.0 - p_chance))
}

/// Which denominator convention to use for the constant-based bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginFactor {
    /// `G·√V`.
    One,
    /// `2·G·√V`.
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaStarModel {
    pub m_q: f64,
    pub g_eff: f64,
    #[serde(default)]
    pub eps_lin: f64,
    #[serde(default)]
    pub eps_hom: f64,
    /// `sin(α⋆)·√V_Tmem`, when calibrated.
    pub c: Option<f64>,
    pub factor: MarginFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaStarEstimate {
    pub degrees: f64,
    pub argument: f64,
    /// Set when the arcsin argument fell outside [0, 1] and was clamped.
    pub flag: Option<String>,
    pub c_form_degrees: Option<f64>,
}

fn clamped_arcsin_deg(arg: f64) -> (f64, Option<String>) {
    let flag = if arg > 1.0 {
        Some(format!("unreachable threshold: argument {arg:.4} > 1"))
    } else if arg < 0.0 {
        Some(format!("argument {arg:.4} < 0"))
    } else {
        None
    };
    (arg.clamp(0.0, 1.0).asin().to_degrees(), flag)
}

pub fn alpha_star_from_constants(model: &AlphaStarModel, v_tmem: f64) -> Result<AlphaStarEstimate> {
    if !(v_tmem > 0.0) || !(model.g_eff > 0.0) {
        return Err(invalid("V_Tmem and G must be positive"));
    }
    let k = match model.factor {
        MarginFactor::One => 1.0,
        MarginFactor::Two => 2.0,
    };
    let argument =
        (model.m_q - 2.0 * (model.eps_lin + model.eps_hom)) / (k * model.g_eff * v_tmem.sqrt());
    let (degrees, flag) = clamped_arcsin_deg(argument);
    let c_form_degrees = model.c.map(|c| alpha_star_c_form(c, v_tmem.sqrt()).0);
    Ok(AlphaStarEstimate {
        degrees,
        argument,
        flag,
        c_form_degrees,
    })
}

/// `arcsin(C / √V_Tmem)` in degrees, with the clamp flag.
pub fn alpha_star_c_form(c: f64, sqrt_v_tmem: f64) -> (f64, Option<String>) {
    clamped_arcsin_deg(c / sqrt_v_tmem)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CCell {
    pub p: u64,
    pub sqrt_v_tmem: f64,
    pub alpha_star_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CCalibration {
    pub per_cell: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
    pub cv: f64,
}

pub fn calibrate_c(cells: &[CCell]) -> Result<CCalibration> {
    if cells.is_empty() {
        return Err(invalid("need at least one cell"));
    }
    let cs: Vec<f64> = cells
        .iter()
        .map(|c| c.alpha_star_deg.to_radians().sin() * c.sqrt_v_tmem)
        .collect();
    let (m, s) = (mean(&cs), std_pop(&cs));
    Ok(CCalibration {
        per_cell: cells.iter().map(|c| c.p).zip(cs).collect(),
        mean: m,
        std: s,
        cv: s / m,
    })
}
