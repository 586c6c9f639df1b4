//! Central finite-difference gradient checking.

/// `max|a - n| / max(‖a‖∞, ‖n‖∞)`; zero when both are identically zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / scale
}

/// Central differences `(f(x + εe_i) - f(x - εe_i)) / 2ε` for every coordinate.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Compares `analytic` against central differences of `f` at `x`.
pub fn grad_check<F: FnMut(&[f64]) -> f64>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> f64 {
    relative_error(analytic, &numeric_gradient(f, x, eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let f = |x: &[f64]| x[0] * x[0];
        assert!(grad_check(f, &[1.0], &[2.0], 1e-5) < 1e-8);
    }

    #[test]
    fn detects_corrupted_gradient() {
        let f = |x: &[f64]| x[0] * x[0] * x[1] + x[1].sin();
        let x = [0.7, 1.3];
        let g = [2.0 * 0.7 * 1.3, 0.49 + 1.3f64.cos()];
        assert!(grad_check(f, &x, &g, 1e-5) < 1e-8);
        let bad = [g[0] * 1.1, g[1]];
        assert!(grad_check(f, &x, &bad, 1e-5) > 1e-2);
    }

    #[test]
    fn zero_vectors() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }
}
