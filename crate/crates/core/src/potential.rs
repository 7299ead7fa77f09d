//! Forced double-well potentials V₀(x, y), 1-periodic in y, and the per-slice
//! critical-point geometry.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("slice y = {y} is not bistable: drift has {roots} zeros on the scan grid")]
    BistabilityLost { y: f64, roots: usize },
    #[error("slice y = {y} has a degenerate critical point at x = {x} (curvature {curvature:e})")]
    Degenerate { y: f64, x: f64, curvature: f64 },
}

/// Constants with x·b(x, y) <= -m x² whenever |x| >= l.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confinement {
    pub m: f64,
    pub l: f64,
}

/// A smooth potential, 1-periodic in y. Derivatives must be analytic.
pub trait Potential: Send + Sync {
    fn v(&self, x: f64, y: f64) -> f64;
    fn dx(&self, x: f64, y: f64) -> f64;
    fn dxx(&self, x: f64, y: f64) -> f64;
    fn dy(&self, x: f64, y: f64) -> f64;
    fn dxy(&self, x: f64, y: f64) -> f64;
    fn dyy(&self, x: f64, y: f64) -> f64;
    fn confinement(&self) -> Confinement;

    fn drift(&self, x: f64, y: f64) -> f64 {
        -self.dx(x, y)
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn v(&self, x: f64, y: f64) -> f64 {
        (**self).v(x, y)
    }
    fn dx(&self, x: f64, y: f64) -> f64 {
        (**self).dx(x, y)
    }
    fn dxx(&self, x: f64, y: f64) -> f64 {
        (**self).dxx(x, y)
    }
    fn dy(&self, x: f64, y: f64) -> f64 {
        (**self).dy(x, y)
    }
    fn dxy(&self, x: f64, y: f64) -> f64 {
        (**self).dxy(x, y)
    }
    fn dyy(&self, x: f64, y: f64) -> f64 {
        (**self).dyy(x, y)
    }
    fn confinement(&self) -> Confinement {
        (**self).confinement()
    }
    fn drift(&self, x: f64, y: f64) -> f64 {
        (**self).drift(x, y)
    }
}

/// V₀ = x⁴/4 − d·x²/2 − a·cos(2π(y − φ))·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedQuartic {
    pub base_depth: f64,
    pub tilt_amplitude: f64,
    pub tilt_phase: f64,
}

pub fn make_tilted_quartic(base_depth: f64, tilt_amplitude: f64, tilt_phase: f64) -> TiltedQuartic {
    TiltedQuartic { base_depth, tilt_amplitude, tilt_phase }
}

impl TiltedQuartic {
    #[inline]
    fn angle(&self, y: f64) -> f64 {
        TAU * (y - self.tilt_phase)
    }

    /// Linear tilt coefficient at slice y.
    #[inline]
    pub fn tilt(&self, y: f64) -> f64 {
        self.tilt_amplitude * self.angle(y).cos()
    }
}

impl Potential for TiltedQuartic {
    #[inline]
    fn v(&self, x: f64, y: f64) -> f64 {
        let x2 = x * x;
        0.25 * x2 * x2 - 0.5 * self.base_depth * x2 - self.tilt(y) * x
    }
    #[inline]
    fn dx(&self, x: f64, y: f64) -> f64 {
        x * x * x - self.base_depth * x - self.tilt(y)
    }
    #[inline]
    fn dxx(&self, x: f64, _y: f64) -> f64 {
        3.0 * x * x - self.base_depth
    }
    #[inline]
    fn dy(&self, x: f64, y: f64) -> f64 {
        TAU * self.tilt_amplitude * self.angle(y).sin() * x
    }
    #[inline]
    fn dxy(&self, _x: f64, y: f64) -> f64 {
        TAU * self.tilt_amplitude * self.angle(y).sin()
    }
    #[inline]
    fn dyy(&self, x: f64, y: f64) -> f64 {
        TAU * TAU * self.tilt(y) * x
    }
    fn confinement(&self) -> Confinement {
        // x·b = −x⁴ + d x² + t x <= −x²/2 once x² >= d + 1/2 + |a| and |x| >= 1.
        let l = (self.base_depth.max(0.0) + 0.5 + self.tilt_amplitude.abs()).sqrt().ceil().max(1.0);
        Confinement { m: 0.5, l }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellGeometry {
    pub y: f64,
    pub x_minus: f64,
    pub x_saddle: f64,
    pub x_plus: f64,
    pub v_minus: f64,
    pub v_saddle: f64,
    pub v_plus: f64,
    pub h_minus: f64,
    pub h_plus: f64,
    /// h₊ − h₋.
    pub delta: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
    pub omega0: f64,
}

impl WellGeometry {
    /// Curvature-corrected depth difference Δ + (σ²/2)·log(ω₋/ω₊).
    pub fn delta_bar(&self, sigma: f64) -> f64 {
        self.delta + 0.5 * sigma * sigma * (self.omega_minus / self.omega_plus).ln()
    }

    pub fn v_min(&self) -> f64 {
        self.v_minus.min(self.v_plus)
    }
}

const SCAN_POINTS: usize = 512;
const ROOT_TOL: f64 = 1e-12;

fn polish_root<P: Potential + ?Sized>(model: &P, y: f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = model.drift(a, y);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a < 1e-13 * (1.0 + m.abs()) {
            break;
        }
        let fm = model.drift(m, y);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..8 {
        let f = model.drift(x, y);
        if f.abs() < ROOT_TOL * 1e-2 {
            break;
        }
        let df = -model.dxx(x, y);
        if df == 0.0 {
            break;
        }
        let step = f / df;
        if step.abs() > 1e-6 {
            break;
        }
        x -= step;
    }
    x
}

/// Locates the three zeros of b(·, y) by a sign-change scan over
/// [−L−1, L+1] followed by bisection and Newton polishing.
pub fn find_critical_points<P: Potential + ?Sized>(model: &P, y: f64) -> Result<WellGeometry, PotentialError> {
    let Confinement { l, .. } = model.confinement();
    let (lo, hi) = (-l - 1.0, l + 1.0);
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let mut roots = Vec::with_capacity(3);
    let mut prev_x = lo;
    let mut prev_b = model.drift(lo, y);
    if prev_b == 0.0 {
        roots.push(lo);
    }
    for i in 1..SCAN_POINTS {
        let x = lo + step * i as f64;
        let b = model.drift(x, y);
        if b == 0.0 {
            roots.push(x);
        } else if prev_b != 0.0 && (b > 0.0) != (prev_b > 0.0) {
            roots.push(polish_root(model, y, prev_x, x));
        }
        prev_x = x;
        prev_b = b;
    }
    if roots.len() != 3 {
        return Err(PotentialError::BistabilityLost { y, roots: roots.len() });
    }
    let (xm, x0, xp) = (roots[0], roots[1], roots[2]);
    for &x in &roots {
        if model.drift(x, y).abs() > ROOT_TOL {
            return Err(PotentialError::BistabilityLost { y, roots: roots.len() });
        }
    }
    let (cm, c0, cp) = (model.dxx(xm, y), model.dxx(x0, y), model.dxx(xp, y));
    for (x, c, want_positive) in [(xm, cm, true), (x0, c0, false), (xp, cp, true)] {
        if (c > 0.0) != want_positive || c.abs() < 1e-8 {
            return Err(PotentialError::Degenerate { y, x, curvature: c });
        }
    }
    let (vm, v0, vp) = (model.v(xm, y), model.v(x0, y), model.v(xp, y));
    let (h_minus, h_plus) = (v0 - vm, v0 - vp);
    Ok(WellGeometry {
        y,
        x_minus: xm,
        x_saddle: x0,
        x_plus: xp,
        v_minus: vm,
        v_saddle: v0,
        v_plus: vp,
        h_minus,
        h_plus,
        delta: h_plus - h_minus,
        omega_minus: cm.sqrt(),
        omega_plus: cp.sqrt(),
        omega0: (-c0).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub bistable: bool,
    pub nondegenerate: bool,
    pub confined: bool,
    pub periodic: bool,
    pub confinement: Confinement,
    /// Smallest |∂ₓb| over all critical points found.
    pub min_abs_curvature: f64,
    /// Slices on which some check failed.
    pub failing_y: Vec<f64>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.bistable && self.nondegenerate && self.confined && self.periodic
    }
}

/// Smallest |∂ₓb| accepted as nondegenerate.
pub const NONDEGENERACY_FLOOR: f64 = 1e-3;

pub fn validate_assumptions<P: Potential + ?Sized>(model: &P, y_grid: &[f64]) -> ValidationReport {
    let conf = model.confinement();
    let mut report = ValidationReport {
        bistable: true,
        nondegenerate: true,
        confined: true,
        periodic: true,
        confinement: conf,
        min_abs_curvature: f64::INFINITY,
        failing_y: Vec::new(),
    };
    for &y in y_grid {
        let mut ok = true;
        match find_critical_points(model, y) {
            Ok(g) => {
                let c = g.omega_minus.powi(2).min(g.omega_plus.powi(2)).min(g.omega0.powi(2));
                report.min_abs_curvature = report.min_abs_curvature.min(c);
                if c < NONDEGENERACY_FLOOR {
                    report.nondegenerate = false;
                    ok = false;
                }
            }
            Err(PotentialError::BistabilityLost { .. }) => {
                report.bistable = false;
                ok = false;
            }
            Err(PotentialError::Degenerate { curvature, .. }) => {
                report.nondegenerate = false;
                report.min_abs_curvature = report.min_abs_curvature.min(curvature.abs());
                ok = false;
            }
        }
        for k in 0..=200 {
            let r = conf.l * (1.0 + 9.0 * k as f64 / 200.0);
            for x in [r, -r] {
                if x * model.drift(x, y) > -conf.m * x * x {
                    report.confined = false;
                    ok = false;
                }
            }
        }
        for k in 0..16 {
            let x = -2.0 + 0.25 * k as f64;
            let (a, b) = (model.v(x, y), model.v(x, y + 1.0));
            if (a - b).abs() > 1e-10 * (1.0 + a.abs()) {
                report.periodic = false;
                ok = false;
            }
        }
        if !ok {
            report.failing_y.push(y);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_quartic_values() {
        let m = make_tilted_quartic(1.0, 0.0, 0.0);
        for y in [0.0, 0.3, 0.77] {
            assert_eq!(m.v(1.0, y), -0.25);
            assert_eq!(m.v(-1.0, y), -0.25);
            assert_eq!(m.v(0.0, y), 0.0);
        }
        let g = find_critical_points(&m, 0.4).unwrap();
        assert!((g.x_minus + 1.0).abs() < 1e-12 && g.x_saddle.abs() < 1e-12 && (g.x_plus - 1.0).abs() < 1e-12);
        assert!((g.h_minus - 0.25).abs() < 1e-13 && (g.h_plus - 0.25).abs() < 1e-13);
        assert!((g.omega_minus - 2f64.sqrt()).abs() < 1e-12 && (g.omega0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tilt_lowers_right_well_at_zero_phase() {
        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let g = find_critical_points(&m, 0.0).unwrap();
        assert!(g.h_minus < g.h_plus);
        let q = find_critical_points(&m, 0.25).unwrap();
        assert!((q.h_minus - q.h_plus).abs() < 1e-12);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let m = make_tilted_quartic(1.2, 0.17, 0.1);
        let h = 1e-5;
        for &(x, y) in &[(0.3, 0.1), (-1.1, 0.6), (1.7, 0.93)] {
            let fx = (m.v(x + h, y) - m.v(x - h, y)) / (2.0 * h);
            let fy = (m.v(x, y + h) - m.v(x, y - h)) / (2.0 * h);
            let fxx = (m.dx(x + h, y) - m.dx(x - h, y)) / (2.0 * h);
            let fxy = (m.dx(x, y + h) - m.dx(x, y - h)) / (2.0 * h);
            let fyy = (m.dy(x, y + h) - m.dy(x, y - h)) / (2.0 * h);
            assert!((fx - m.dx(x, y)).abs() < 1e-8);
            assert!((fy - m.dy(x, y)).abs() < 1e-8);
            assert!((fxx - m.dxx(x, y)).abs() < 1e-8);
            assert!((fxy - m.dxy(x, y)).abs() < 1e-7);
            assert!((fyy - m.dyy(x, y)).abs() < 1e-6);
        }
    }

    #[test]
    fn validation_flags_monostable_tilt() {
        let grid: Vec<f64> = (0..64).map(|j| j as f64 / 64.0).collect();
        assert!(validate_assumptions(&make_tilted_quartic(1.0, 0.0, 0.0), &grid).all_pass());
        let bad = validate_assumptions(&make_tilted_quartic(1.0, 1.0, 0.0), &grid);
        assert!(!bad.bistable);
        assert!(!bad.failing_y.is_empty());
    }
}
