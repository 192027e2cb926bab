use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// 0 when `y` has zero variance.
    pub r_squared: f64,
    pub n_points: usize,
    /// Set when `y` had zero variance and `r_squared` was defined as 0.
    pub flat_response: bool,
}

pub fn least_squares_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "x has {} points but y has {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * mx.abs().max(1.0).powi(2) * nf {
        return Err(Error::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let flat = syy == 0.0;
    let r_squared = if flat {
        0.0
    } else {
        let ss_res: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| {
                let r = yi - (intercept + slope * xi);
                r * r
            })
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        n_points: n,
        flat_response: flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::seeded_rng;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = least_squares_line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_response_has_zero_r2() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let f = least_squares_line(&x, &[5.0; 4]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r_squared, 0.0);
        assert!(f.flat_response);
    }

    #[test]
    fn degenerate_abscissa_rejected() {
        let err = least_squares_line(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateAbscissa));
        assert_eq!(err.to_string(), "degenerate abscissa");
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(least_squares_line(&[0.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn noisy_slope_recovered() {
        let mut rng = seeded_rng(5);
        let x: Vec<f64> = (0..200).map(|i| f64::from(i) * 20.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|t| (-0.48e-3 * t + 9.0) * (1.0 + 0.01 * rng.normal()))
            .collect();
        let f = least_squares_line(&x, &y).unwrap();
        assert!(
            ((f.slope + 0.48e-3) / 0.48e-3).abs() < 0.02,
            "slope {}",
            f.slope
        );
    }

    proptest! {
        #[test]
        fn noiseless_slope_is_exact(slope in -5.0f64..5.0, icpt in -100.0f64..100.0, n in 3usize..60) {
            prop_assume!(slope.abs() > 1e-3);
            let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 3.0).collect();
            let y: Vec<f64> = x.iter().map(|v| slope * v + icpt).collect();
            let f = least_squares_line(&x, &y).unwrap();
            prop_assert!(((f.slope - slope) / slope).abs() < 1e-10);
            prop_assert!((f.r_squared - 1.0).abs() < 1e-12);
        }
    }
}
