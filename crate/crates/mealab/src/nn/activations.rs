//! Scalar activations and their exact derivatives.
//!
//! gelu uses the exact Gaussian-CDF form, not the tanh approximation, so the
//! finite-difference suite has an unambiguous analytic counterpart.

use ndarray::Array2;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact gelu: `x * Phi(x)` with the standard normal CDF.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// `Phi(x) + x * phi(x)`; equals 0.5 at x = 0.
pub fn gelu_derivative(x: f64) -> f64 {
    normal_cdf(x) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn relu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gelu_matches_finite_differences() {
        let h = 1e-6;
        for &x in &[-3.0, -1.0, -0.3, 0.0, 0.5, 1.7, 4.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(gelu_derivative(x), fd, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(gelu_derivative(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert_abs_diff_eq!(sigmoid(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = ndarray::array![[1.0, 2.0, 3.0], [1000.0, 1000.0, 999.0]];
        let p = softmax_rows(&z);
        for row in p.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }
}
