/// Central-difference gradient over every coordinate.
pub fn finite_diff_gradient<F>(f: F, theta: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize> = (0..theta.len()).collect();
    finite_diff_gradient_sampled(f, theta, h, &all)
}

/// Central differences on a subset of coordinates; entry `i` of the result
/// corresponds to `coords[i]`.
pub fn finite_diff_gradient_sampled<F>(
    mut f: F,
    theta: &[f64],
    h: f64,
    coords: &[usize],
) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut probe = theta.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_gradient(|t| t.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-4);
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn bilinear_hand_value() {
        let g = finite_diff_gradient(|t| t[0] * t[1], &[3.0, 5.0], 1e-4);
        assert!((g[0] - 5.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn sampled_subset_order() {
        let g =
            finite_diff_gradient_sampled(|t| 3.0 * t[2] - t[0], &[0.0, 0.0, 0.0], 1e-3, &[2, 0]);
        assert!((g[0] - 3.0).abs() < 1e-10);
        assert!((g[1] + 1.0).abs() < 1e-10);
    }
}
