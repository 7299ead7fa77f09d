//! Periodic cubic spline on a uniform grid over one period [0, 1).

#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
    h: f64,
    /// cumulative[j] = ∫_0^{y_j} S, with cumulative[n] = ∫ over the whole period.
    cumulative: Vec<f64>,
}

impl PeriodicSpline {
    /// `values[j]` is the sample at y = j / n. Needs n >= 3.
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 3, "periodic spline needs at least three samples");
        let h = 1.0 / n as f64;
        let rhs: Vec<f64> =
            (0..n).map(|j| 6.0 * (values[(j + 1) % n] - 2.0 * values[j] + values[(j + n - 1) % n]) / (h * h)).collect();
        let second = solve_cyclic_141(&rhs);
        let mut s = PeriodicSpline { values: values.to_vec(), second, h, cumulative: vec![0.0; n + 1] };
        for j in 0..n {
            s.cumulative[j + 1] = s.cumulative[j] + s.cell_integral(j, 1.0);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, y: f64) -> (usize, f64) {
        let n = self.values.len();
        let u = y.rem_euclid(1.0) * n as f64;
        let j = (u.floor() as usize).min(n - 1);
        (j, (u - j as f64).clamp(0.0, 1.0))
    }

    pub fn eval(&self, y: f64) -> f64 {
        let (j, s) = self.locate(y);
        let n = self.values.len();
        let (y0, y1) = (self.values[j], self.values[(j + 1) % n]);
        let (m0, m1) = (self.second[j], self.second[(j + 1) % n]);
        let t = 1.0 - s;
        t * y0 + s * y1 + self.h * self.h / 6.0 * ((t * t * t - t) * m0 + (s * s * s - s) * m1)
    }

    pub fn derivative(&self, y: f64) -> f64 {
        let (j, s) = self.locate(y);
        let n = self.values.len();
        let (y0, y1) = (self.values[j], self.values[(j + 1) % n]);
        let (m0, m1) = (self.second[j], self.second[(j + 1) % n]);
        let t = 1.0 - s;
        (y1 - y0) / self.h + self.h / 6.0 * ((1.0 - 3.0 * t * t) * m0 + (3.0 * s * s - 1.0) * m1)
    }

    pub fn second_derivative(&self, y: f64) -> f64 {
        let (j, s) = self.locate(y);
        let n = self.values.len();
        (1.0 - s) * self.second[j] + s * self.second[(j + 1) % n]
    }

    fn cell_integral(&self, j: usize, s: f64) -> f64 {
        let n = self.values.len();
        let (y0, y1) = (self.values[j], self.values[(j + 1) % n]);
        let (m0, m1) = (self.second[j], self.second[(j + 1) % n]);
        let t = 1.0 - s;
        let lin = y0 * (s - 0.5 * s * s) + y1 * 0.5 * s * s;
        let cub = m0 * (-0.25 * t.powi(4) + 0.5 * t * t - 0.25) + m1 * (0.25 * s.powi(4) - 0.5 * s * s);
        self.h * (lin + self.h * self.h / 6.0 * cub)
    }

    /// Integral over one full period.
    pub fn period_integral(&self) -> f64 {
        self.cumulative[self.values.len()]
    }

    /// Mean over one period.
    pub fn mean(&self) -> f64 {
        self.period_integral()
    }

    /// ∫_0^y S for any real y, using exact periodic continuation.
    pub fn antiderivative(&self, y: f64) -> f64 {
        let k = y.floor();
        let (j, s) = self.locate(y - k);
        k * self.period_integral() + self.cumulative[j] + self.cell_integral(j, s)
    }

    pub fn min_sample(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Solves the circulant system with stencil (1, 4, 1) / 6 scaled by h^2, i.e.
/// M_{j-1} + 4 M_j + M_{j+1} = rhs_j with periodic wrap.
fn solve_cyclic_141(rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    // Sherman–Morrison on the cyclic tridiagonal matrix.
    let (a, b, c) = (1.0, 4.0, 1.0);
    let gamma = -b;
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - a * c / gamma;
    let x = thomas(&diag, a, c, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c;
    let z = thomas(&diag, a, c, &u);
    let fact = (x[0] + a * x[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(diag: &[f64], lower: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower * c[i - 1];
        c[i] = upper / m;
        d[i] = (rhs[i] - lower * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sampled(n: usize, f: impl Fn(f64) -> f64) -> PeriodicSpline {
        PeriodicSpline::new(&(0..n).map(|j| f(j as f64 / n as f64)).collect::<Vec<_>>())
    }

    #[test]
    fn interpolates_nodes_and_constants() {
        let s = sampled(16, |y| (TAU * y).sin());
        for j in 0..16 {
            let y = j as f64 / 16.0;
            assert!((s.eval(y) - (TAU * y).sin()).abs() < 1e-14);
        }
        let c = sampled(8, |_| 2.5);
        assert!((c.eval(0.377) - 2.5).abs() < 1e-14);
        assert!((c.antiderivative(3.25) - 2.5 * 3.25).abs() < 1e-12);
    }

    #[test]
    fn trig_accuracy_and_integrals() {
        let s = sampled(64, |y| 1.0 + 0.3 * (TAU * y).cos());
        for k in 0..50 {
            let y = k as f64 / 50.0 + 0.013;
            assert!((s.eval(y) - (1.0 + 0.3 * (TAU * y).cos())).abs() < 1e-6);
            assert!((s.derivative(y) + 0.3 * TAU * (TAU * y).sin()).abs() < 1e-4);
            let exact = y + 0.3 * (TAU * y).sin() / TAU;
            assert!((s.antiderivative(y) - exact).abs() < 1e-8);
        }
        assert!((s.period_integral() - 1.0).abs() < 1e-13);
        assert!((s.antiderivative(-0.75) - (-0.75 + 0.3 * (TAU * -0.75).sin() / TAU)).abs() < 1e-8);
    }
}
