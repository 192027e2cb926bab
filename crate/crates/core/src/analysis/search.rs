//! Derivative-free 1-D minimisation: log-spaced scan then golden-section refinement.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ScanResult {
    pub x: f64,
    /// Best scan point was the first or last grid point.
    pub at_boundary: bool,
    /// Objective range over the scan was within `flat_tol`.
    pub flat: bool,
}

pub(crate) fn scan_refine(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
    flat_tol: f64,
) -> ScanResult {
    debug_assert!(lo > 0.0 && hi > lo && n >= 3);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let (best, _) = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &f64::NAN));
    let finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
    let vmax = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let flat = finite.is_empty() || vmax - vmin <= flat_tol;
    let at_boundary = best == 0 || best == n - 1;

    // Golden section in log space over the bracketing cell.
    let mut a = grid[best.saturating_sub(1)].ln();
    let mut b = grid[(best + 1).min(n - 1)].ln();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d.exp());
        }
    }
    let (x, value) = if fc < fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    };
    let x = if value <= vals[best] { x } else { grid[best] };
    ScanResult {
        x,
        at_boundary,
        flat,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let r = scan_refine(|x| (x.ln() - 2.0f64.ln()).powi(2), 1e-3, 1e3, 61, 0.0);
        assert!((r.x - 2.0).abs() < 1e-8, "{}", r.x);
        assert!(!r.at_boundary && !r.flat);
    }

    #[test]
    fn flags_boundary_and_flat() {
        assert!(scan_refine(|x| x, 1.0, 10.0, 11, 0.0).at_boundary);
        assert!(scan_refine(|_| 3.0, 1.0, 10.0, 11, 0.0).flat);
    }
}
