//! Numeric gradient verification utilities.
//!
//! The backward passes in this crate are hand-written, so every one of them
//! is checked against central finite differences. Those checks run on the
//! `f64` instantiations of the kernels: double precision leaves enough
//! headroom below the comparison tolerances that a failure means a wrong
//! derivative, not roundoff. Production code stays `f32`.

/// Symmetric relative error `|a - b| / max(|a| + |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Largest pairwise [`relative_error`] between two gradient vectors.
///
/// # Panics
/// Panics if the slices differ in length — that is a harness bug, not a
/// numeric failure.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(
        analytic.len(),
        numeric.len(),
        "gradient vectors differ in length"
    );
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Central-difference gradient of `f` at `x`: component `i` is
/// `(f(x + step * e_i) - f(x - step * e_i)) / (2 * step)`.
pub fn numeric_gradient(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let original = probe[i];
        probe[i] = original + step;
        let plus = f(&probe);
        probe[i] = original - step;
        let minus = f(&probe);
        probe[i] = original;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_quadratic_is_exact_enough() {
        // f(x) = sum(x_i^2) has gradient 2x; central differences are exact
        // for quadratics up to roundoff.
        let x = vec![0.5, -1.25, 3.0];
        let grad = numeric_gradient(&x, 1e-4, |v| v.iter().map(|a| a * a).sum());
        for (g, xi) in grad.iter().zip(&x) {
            assert!(relative_error(*g, 2.0 * xi) < 1e-9);
        }
    }

    #[test]
    fn relative_error_is_symmetric_and_guarded() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1.0, 1.0) < 1e-15);
        assert!((relative_error(1.0, 2.0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(relative_error(1e-12, 0.0), 1e-12 / 1e-8);
    }
}
