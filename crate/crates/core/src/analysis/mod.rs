//! Fits, calibration, delay prediction and summary statistics over training trajectories.

mod angular;
mod cells;
mod fits;
mod predict;
mod scaling;
mod search;
mod stats;
#[cfg(test)]
mod tests;

pub use angular::{
    alpha_star_c_form, alpha_star_from_constants, calibrate_c, q_delta, quantile_margin,
    AlphaStarEstimate, AlphaStarModel, CCalibration, CCell, MarginFactor,
};
pub use cells::{
    calibrate, cell_statistics, group_by_cell, loocv_calibration, predict_t_grok, ratio_stability,
    summarize_cell, three_tier_report, tier_of, Calibration, CellId, CellStatistics, CellSummary,
    LoocvFold, LoocvReport, RatioStability, RunRecord, Spread, TierCellRow, TierReport, TierRow,
    CROSSING_ACC, FIT_MARGIN, KAPPA_MIN_R2,
};
pub use fits::{
    fit_alpha_saturation, fit_kappa_loglinear, fit_kappa_window, fit_kosson, fit_kosson_series,
    fit_timescales, kappa_window, measure_crossing, AlphaSaturation, Crossing, KappaFit,
    KossonCurve, KossonFit, Timescales, WindowRule,
};
pub use predict::{predict_delay_a, predict_delay_b, DelayPrediction};
pub use scaling::{
    compare_scaling_forms, fit_overshoot_law, overshoot_metrics, power_law_fit, OvershootMetrics,
    PowerLawFit, ScalingComparison,
};
pub use stats::{
    bootstrap_ci, cv, iqr, mape, mean, median, quantile, std_pop, QuantileRule, Statistic,
};
