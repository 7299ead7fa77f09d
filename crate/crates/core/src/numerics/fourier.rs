//! Trigonometric collocation on the uniform periodic grid y_j = j / n.

use nalgebra::DMatrix;
use std::f64::consts::{PI, TAU};

/// First-derivative matrix for period-1 trigonometric interpolation.
pub fn differentiation_matrix(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let arg = PI * k / n as f64;
            d[(i, j)] = if n.is_multiple_of(2) { 0.5 * sign / arg.tan() } else { 0.5 * sign / arg.sin() } * TAU;
        }
    }
    d
}

/// Evaluates the trigonometric interpolant of periodic samples at y.
pub fn interpolate(samples: &[f64], y: f64) -> f64 {
    let n = samples.len();
    let nf = n as f64;
    let u = y.rem_euclid(1.0) * nf;
    let mut s = 0.0;
    for (j, v) in samples.iter().enumerate() {
        let t = u - j as f64;
        if t.abs() < 1e-14 {
            return *v;
        }
        let arg = PI * t / nf;
        // Periodic sinc kernel; even n uses the cotangent form.
        let kernel = if n.is_multiple_of(2) { (PI * t).sin() / (nf * arg.tan()) } else { (PI * t).sin() / (nf * arg.sin()) };
        s += v * kernel;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiates_trig_polynomials() {
        for n in [15usize, 16] {
            let y: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
            let f: Vec<f64> = y.iter().map(|&t| (TAU * t).sin() + 0.5 * (2.0 * TAU * t).cos()).collect();
            let d = differentiation_matrix(n);
            let df = &d * nalgebra::DVector::from_vec(f);
            for (j, &t) in y.iter().enumerate() {
                let exact = TAU * (TAU * t).cos() - TAU * (2.0 * TAU * t).sin();
                assert!((df[j] - exact).abs() < 1e-10, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn interpolation_is_exact_for_low_modes() {
        for n in [9usize, 12] {
            let f: Vec<f64> = (0..n).map(|j| (TAU * j as f64 / n as f64).cos() + 1.0).collect();
            for &y in &[0.0, 0.123, 0.5, 0.77] {
                assert!((interpolate(&f, y) - ((TAU * y).cos() + 1.0)).abs() < 1e-12);
            }
        }
    }
}
