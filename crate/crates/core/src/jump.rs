//! Time-dependent two-state jump reduction: periodic occupation asymmetry δ,
//! occupation probabilities, closed-form mean transition time and an exact
//! hazard-inversion sampler.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::quad::gl8;
use crate::numerics::PeriodicSpline;
use crate::potential::{find_critical_points, Potential, PotentialError};
use crate::rng::substream;
use crate::spectral::kramers_rates;
use crate::stats::HittingStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JumpError {
    #[error("rate profile needs at least 3 samples per period, got {0}")]
    TooFewSamples(usize),
    #[error("sample arrays have different lengths")]
    LengthMismatch,
    #[error("{name} is not strictly positive near y = {y} (value {value:e})")]
    NonPositiveRate { name: &'static str, y: f64, value: f64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("relaxation rate integrates to {0:e} over one period; no periodic solution")]
    NoRelaxation(f64),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Tabulation grid for δ.
pub const DELTA_GRID: usize = 4096;

/// Rates r±(y), λ₁(y) and A(y) on a uniform periodic grid, interpolated by
/// periodic cubic splines.
#[derive(Debug, Clone)]
pub struct RateProfile {
    pub epsilon: f64,
    r_minus: PeriodicSpline,
    r_plus: PeriodicSpline,
    lambda1: PeriodicSpline,
    a: PeriodicSpline,
}

fn check_positive(name: &'static str, s: &PeriodicSpline) -> Result<(), JumpError> {
    let n = 4 * s.len().max(256);
    for k in 0..n {
        let y = k as f64 / n as f64;
        let v = s.eval(y);
        if !(v > 0.0) {
            return Err(JumpError::NonPositiveRate { name, y, value: v });
        }
    }
    Ok(())
}

impl RateProfile {
    /// Samples at y_j = j/n. λ₁ is r₋ + r₊.
    pub fn new(r_minus: &[f64], r_plus: &[f64], a: &[f64], epsilon: f64) -> Result<Self, JumpError> {
        let l: Vec<f64> = r_minus.iter().zip(r_plus).map(|(p, q)| p + q).collect();
        Self::with_lambda1(r_minus, r_plus, &l, a, epsilon)
    }

    /// As `new` but with an independently supplied λ₁ (e.g. a numerical eigenvalue).
    pub fn with_lambda1(r_minus: &[f64], r_plus: &[f64], lambda1: &[f64], a: &[f64], epsilon: f64) -> Result<Self, JumpError> {
        let n = r_minus.len();
        if n < 3 {
            return Err(JumpError::TooFewSamples(n));
        }
        if r_plus.len() != n || lambda1.len() != n || a.len() != n {
            return Err(JumpError::LengthMismatch);
        }
        if !(epsilon > 0.0) {
            return Err(JumpError::BadEpsilon(epsilon));
        }
        let p = RateProfile {
            epsilon,
            r_minus: PeriodicSpline::new(r_minus),
            r_plus: PeriodicSpline::new(r_plus),
            lambda1: PeriodicSpline::new(lambda1),
            a: PeriodicSpline::new(a),
        };
        check_positive("r_minus", &p.r_minus)?;
        check_positive("r_plus", &p.r_plus)?;
        check_positive("lambda1", &p.lambda1)?;
        Ok(p)
    }

    /// Kramers profile of a potential on `y_points` uniform slices.
    pub fn from_model<P: Potential + ?Sized>(model: &P, sigma: f64, epsilon: f64, y_points: usize) -> Result<Self, JumpError> {
        let mut rm = Vec::with_capacity(y_points);
        let mut rp = Vec::with_capacity(y_points);
        let mut a = Vec::with_capacity(y_points);
        for j in 0..y_points {
            let g = find_critical_points(model, j as f64 / y_points as f64)?;
            let k = kramers_rates(&g, sigma);
            rm.push(k.r_minus);
            rp.push(k.r_plus);
            a.push(k.a);
        }
        Self::new(&rm, &rp, &a, epsilon)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        RateProfile { epsilon, ..self.clone() }
    }

    pub fn y_points(&self) -> usize {
        self.r_minus.len()
    }

    pub fn y_grid(&self) -> Vec<f64> {
        let n = self.y_points();
        (0..n).map(|j| j as f64 / n as f64).collect()
    }

    pub fn r_minus(&self, y: f64) -> f64 {
        self.r_minus.eval(y)
    }
    pub fn r_plus(&self, y: f64) -> f64 {
        self.r_plus.eval(y)
    }
    pub fn lambda1(&self, y: f64) -> f64 {
        self.lambda1.eval(y)
    }
    pub fn a(&self, y: f64) -> f64 {
        self.a.eval(y)
    }
    pub fn r_minus_samples(&self) -> &[f64] {
        self.r_minus.samples()
    }
    pub fn r_plus_samples(&self) -> &[f64] {
        self.r_plus.samples()
    }
    pub fn lambda1_samples(&self) -> &[f64] {
        self.lambda1.samples()
    }
    pub fn a_samples(&self) -> &[f64] {
        self.a.samples()
    }
    pub fn lambda1_spline(&self) -> &PeriodicSpline {
        &self.lambda1
    }
    pub fn a_spline(&self) -> &PeriodicSpline {
        &self.a
    }

    pub fn mean_lambda1(&self) -> f64 {
        self.lambda1.mean()
    }
    pub fn mean_r_minus(&self) -> f64 {
        self.r_minus.mean()
    }
    pub fn mean_r_plus(&self) -> f64 {
        self.r_plus.mean()
    }

    /// Smallest λ₁ over a fine sampling of the period.
    pub fn min_lambda1(&self) -> f64 {
        (0..DELTA_GRID).map(|k| self.lambda1(k as f64 / DELTA_GRID as f64)).fold(f64::INFINITY, f64::min)
    }
    pub fn max_lambda1(&self) -> f64 {
        (0..DELTA_GRID).map(|k| self.lambda1(k as f64 / DELTA_GRID as f64)).fold(0.0, f64::max)
    }
    pub fn max_r_minus(&self) -> f64 {
        (0..DELTA_GRID).map(|k| self.r_minus(k as f64 / DELTA_GRID as f64)).fold(0.0, f64::max)
    }
    pub fn min_r_minus(&self) -> f64 {
        (0..DELTA_GRID).map(|k| self.r_minus(k as f64 / DELTA_GRID as f64)).fold(f64::INFINITY, f64::min)
    }

    /// ⟨λ₁A⟩/⟨λ₁⟩, the fast-forcing value of δ.
    pub fn averaged_asymmetry(&self) -> f64 {
        let num: f64 = (0..DELTA_GRID)
            .map(|k| {
                let y = (k as f64 + 0.5) / DELTA_GRID as f64;
                self.lambda1(y) * self.a(y)
            })
            .sum::<f64>()
            / DELTA_GRID as f64;
        num / self.mean_lambda1()
    }

    /// Λ(y, y₀) = ∫_{y₀}^{y} λ₁.
    pub fn big_lambda(&self, y: f64, y0: f64) -> f64 {
        self.lambda1.antiderivative(y) - self.lambda1.antiderivative(y0)
    }

    /// R₋(y, y₀) = ∫_{y₀}^{y} r₋.
    pub fn big_r_minus(&self, y: f64, y0: f64) -> f64 {
        self.r_minus.antiderivative(y) - self.r_minus.antiderivative(y0)
    }

    pub fn big_r_plus(&self, y: f64, y0: f64) -> f64 {
        self.r_plus.antiderivative(y) - self.r_plus.antiderivative(y0)
    }
}

/// Periodic solution of ε u′ = −k(y) u + s(y), tabulated on `n` uniform nodes.
/// Each cell is propagated exactly with its integrating factor; cells are
/// subdivided so the decay across any Gauss–Legendre panel stays below e.
pub fn periodic_relaxation(k: &PeriodicSpline, s: &PeriodicSpline, epsilon: f64, n: usize) -> Result<Vec<f64>, JumpError> {
    let total = k.period_integral();
    if !(total > 0.0) {
        return Err(JumpError::NoRelaxation(total));
    }
    let h = 1.0 / n as f64;
    let mut decay = vec![0.0; n];
    let mut source = vec![0.0; n];
    for j in 0..n {
        let (ya, yb) = (j as f64 * h, (j + 1) as f64 * h);
        let kb = k.antiderivative(yb);
        let dk = kb - k.antiderivative(ya);
        decay[j] = (-dk / epsilon).exp();
        let pieces = ((dk.abs() / epsilon).ceil() as usize).clamp(1, 1 << 16);
        let step = h / pieces as f64;
        let mut acc = 0.0;
        for p in 0..pieces {
            let a = ya + step * p as f64;
            acc += gl8(|t| (-(kb - k.antiderivative(t)) / epsilon).exp() * s.eval(t), a, a + step);
        }
        source[j] = acc / epsilon;
    }
    // One sweep from u₀ = 0, then fix u₀ by periodicity.
    let mut u = 0.0;
    for j in 0..n {
        u = decay[j] * u + source[j];
    }
    let period_decay = (-total / epsilon).exp();
    let u0 = u / (1.0 - period_decay);
    let mut out = Vec::with_capacity(n);
    let mut u = u0;
    for j in 0..n {
        out.push(u);
        u = decay[j] * u + source[j];
    }
    Ok(out)
}

/// Fourth-order periodic central difference on a uniform grid of period 1.
pub fn periodic_derivative(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let h = 1.0 / n as f64;
    (0..n)
        .map(|j| {
            let at = |o: isize| values[(j as isize + o).rem_euclid(n as isize) as usize];
            (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
        })
        .collect()
}

/// Cubic Lagrange interpolation of samples on the uniform periodic grid j/n.
pub fn periodic_lagrange(values: &[f64], y: f64) -> f64 {
    let n = values.len();
    let u = y.rem_euclid(1.0) * n as f64;
    let j = (u.floor() as usize).min(n - 1);
    let s = u - j as f64;
    // Cubic Lagrange on four neighbours.
    let at = |o: isize| values[(j as isize + o).rem_euclid(n as isize) as usize];
    let (p0, p1, p2, p3) = (at(-1), at(0), at(1), at(2));
    let w0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let w2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let w3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSolution {
    pub y: Vec<f64>,
    pub delta: Vec<f64>,
    /// sup |ε δ′ + λ₁(δ − A)| over the grid.
    pub residual: f64,
}

impl JumpSolution {
    pub fn spline(&self) -> PeriodicSpline {
        PeriodicSpline::new(&self.delta)
    }

    pub fn delta_at(&self, y: f64) -> f64 {
        periodic_lagrange(&self.delta, y)
    }

    pub fn mean(&self) -> f64 {
        self.delta.iter().sum::<f64>() / self.delta.len() as f64
    }
}

/// The 1-periodic δ solving ε δ′ = −λ₁(δ − A).
pub fn delta_periodic(profile: &RateProfile) -> Result<JumpSolution, JumpError> {
    let n = DELTA_GRID;
    let la: Vec<f64> = (0..profile.y_points()).map(|j| profile.lambda1_samples()[j] * profile.a_samples()[j]).collect();
    let source = PeriodicSpline::new(&la);
    // Use the spline of λ₁A consistently in the residual below.
    let delta = periodic_relaxation(&profile.lambda1, &source, profile.epsilon, n)?;
    let y: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let d = periodic_derivative(&delta);
    let residual =
        (0..n).map(|j| (profile.epsilon * d[j] + profile.lambda1(y[j]) * delta[j] - source.eval(y[j])).abs()).fold(0.0, f64::max);
    Ok(JumpSolution { y, delta, residual })
}

/// Occupation probabilities (p₋, p₊) at y given p₊(y₀) = p_plus_0.
pub fn occupation(profile: &RateProfile, solution: &JumpSolution, p_plus_0: f64, y0: f64, y: f64) -> (f64, f64) {
    let dy = solution.delta_at(y);
    let d0 = solution.delta_at(y0);
    let decay = (-profile.big_lambda(y, y0) / profile.epsilon).exp();
    let c = 0.5 * (p_plus_0 - (1.0 - p_plus_0) - d0) * decay;
    (0.5 * (1.0 - dy) - c, 0.5 * (1.0 + dy) + c)
}

fn survival_integral<F: Fn(f64) -> f64>(cum: F, period: f64, y0: f64, epsilon: f64, cells: usize) -> f64 {
    // ∫_0^1 exp(−R(y₀+u, y₀)/ε) du / (1 − exp(−R(1)/ε))
    let base = cum(y0);
    let h = 1.0 / cells as f64;
    let mut acc = 0.0;
    for j in 0..cells {
        let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
        let ra = cum(y0 + a) - base;
        if ra / epsilon > 745.0 {
            break;
        }
        let rb = cum(y0 + b) - base;
        let pieces = (((rb - ra) / epsilon).ceil() as usize).clamp(1, 1 << 16);
        let step = h / pieces as f64;
        for p in 0..pieces {
            let lo = a + step * p as f64;
            acc += gl8(|u| (-(cum(y0 + u) - base) / epsilon).exp(), lo, lo + step);
        }
    }
    acc / -(-period / epsilon).exp_m1()
}

/// E[τ₊] for the chain started in − at y₀ with + absorbing.
pub fn mean_jump_time(profile: &RateProfile, y0: f64) -> f64 {
    survival_integral(|y| profile.r_minus.antiderivative(y), profile.r_minus.period_integral(), y0, profile.epsilon, DELTA_GRID)
}

/// E[τ₋] for the chain started in + at y₀ with − absorbing.
pub fn mean_jump_time_plus(profile: &RateProfile, y0: f64) -> f64 {
    survival_integral(|y| profile.r_plus.antiderivative(y), profile.r_plus.period_integral(), y0, profile.epsilon, DELTA_GRID)
}

/// Solves R₋(y₀ + u, y₀) = target for u >= 0.
fn invert_hazard(profile: &RateProfile, y0: f64, target: f64) -> f64 {
    let period = profile.r_minus.period_integral();
    let whole = (target / period).floor();
    let rem = target - whole * period;
    let base = profile.r_minus.antiderivative(y0);
    let f = |u: f64| profile.r_minus.antiderivative(y0 + u) - base - rem;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        if f(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = profile.r_minus(y0 + u);
        let next = u - f(u) / d;
        if next.is_finite() && next >= lo && next <= hi {
            u = next;
        }
    }
    whole + u
}

/// Exact samples of τ₊ by inverting P[τ₊ > t] = exp(−R₋(y₀+t, y₀)/ε).
pub fn sample_jump_times(profile: &RateProfile, y0: f64, seed: u64, n_samples: usize) -> Vec<f64> {
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let u: f64 = 1.0 - rng.random::<f64>();
            invert_hazard(profile, y0, -profile.epsilon * u.ln())
        })
        .collect()
}

pub fn simulate_jump(profile: &RateProfile, y0: f64, seed: u64, n_samples: usize) -> HittingStats {
    HittingStats::from_samples(&sample_jump_times(profile, y0, seed, n_samples), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_tilted_quartic;
    use std::f64::consts::TAU;

    fn wavy(n: usize, eps: f64) -> RateProfile {
        let rm: Vec<f64> = (0..n).map(|j| 0.02 * (1.0 + 0.5 * (TAU * j as f64 / n as f64).cos())).collect();
        let rp: Vec<f64> = (0..n).map(|j| 0.03 * (1.0 - 0.4 * (TAU * j as f64 / n as f64).sin())).collect();
        let a: Vec<f64> = (0..n).map(|j| 0.3 * (TAU * j as f64 / n as f64).sin()).collect();
        RateProfile::new(&rm, &rp, &a, eps).unwrap()
    }

    #[test]
    fn constant_rates() {
        let n = 16;
        let p = RateProfile::new(&vec![0.02; n], &vec![0.05; n], &vec![0.3; n], 0.2).unwrap();
        assert!((mean_jump_time(&p, 0.37) - 10.0).abs() < 1e-10);
        let sol = delta_periodic(&p).unwrap();
        assert!(sol.delta.iter().all(|d| (d - 0.3).abs() < 1e-12));
    }

    #[test]
    fn delta_residual_and_periodicity() {
        for eps in [1e-3, 0.05, 2.0] {
            let sol = delta_periodic(&wavy(32, eps)).unwrap();
            assert!(sol.residual < 1e-8, "eps {eps}: residual {}", sol.residual);
            assert!((sol.delta_at(0.0) - sol.delta_at(1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn occupation_initial_condition_and_conservation() {
        let p = wavy(32, 0.1);
        let sol = delta_periodic(&p).unwrap();
        let (m, q) = occupation(&p, &sol, 0.8, 0.3, 0.3);
        assert!((q - 0.8).abs() < 1e-12 && (m - 0.2).abs() < 1e-12);
        let (m, q) = occupation(&p, &sol, 0.8, 0.3, 0.9);
        assert!((m + q - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mean_time_is_one_periodic_in_y0() {
        let p = wavy(32, 0.3);
        assert!((mean_jump_time(&p, 0.2) - mean_jump_time(&p, 1.2)).abs() < 1e-10);
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = wavy(32, 0.3);
        assert_eq!(sample_jump_times(&p, 0.1, 5, 50), sample_jump_times(&p, 0.1, 5, 50));
    }

    #[test]
    fn kramers_profile_sums_rates() {
        let p = RateProfile::from_model(&make_tilted_quartic(1.0, 0.1, 0.0), 0.45, 0.2, 32).unwrap();
        assert!((p.mean_lambda1() - p.mean_r_minus() - p.mean_r_plus()).abs() < 1e-15);
    }
}
