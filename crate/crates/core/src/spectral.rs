//! Frozen-y quantities: partition function, committor, Kramers rates,
//! eigenpairs of the slice generator, y-derivative matrix elements and
//! Laplace reference values.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::numerics::quad::{self, gl8, QuadError};
use crate::numerics::tridiag::{EigenError, SymTridiagonal};
use crate::potential::{find_critical_points, Potential, PotentialError, WellGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(#[from] QuadError),
    #[error("eigen-solver failure: {0}")]
    ConvergenceFailure(#[from] EigenError),
    #[error("eigenfunction {mode} at y = {y} has ambiguous sign relative to its neighbour (overlap {overlap})")]
    SignAmbiguity { mode: usize, y: f64, overlap: f64 },
    #[error("grid has {0} nodes; at least 16 are needed")]
    GridTooSmall(usize),
}

/// Default number of x-nodes.
pub const DEFAULT_X_POINTS: usize = 2048;
/// Truncate where 2(V − min V)/σ² exceeds this.
pub const TRUNCATION_EXPONENT: f64 = 60.0;
/// Step for y-derivatives of slice data.
pub const DEFAULT_DY: f64 = 1e-3;

/// Nodes with trapezoid control-volume weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl XGrid {
    pub fn from_nodes(nodes: Vec<f64>) -> Self {
        let n = nodes.len();
        let mut weights = vec![0.0; n];
        for i in 0..n - 1 {
            let h = nodes[i + 1] - nodes[i];
            assert!(h > 0.0, "grid nodes must be strictly increasing");
            weights[i] += 0.5 * h;
            weights[i + 1] += 0.5 * h;
        }
        XGrid { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Graded grid over [lo, hi] with node density ∝ Σ_k 1/(σ + dist(x, band_k)).
    /// Every entry of `pins` becomes a node.
    pub fn graded(lo: f64, hi: f64, bands: &[(f64, f64)], pins: &[f64], sigma: f64, n: usize) -> Self {
        let cdf = |x: f64| -> f64 {
            bands
                .iter()
                .map(|&(c1, c2)| {
                    if x < c1 {
                        -(1.0 + (c1 - x) / sigma).ln()
                    } else if x <= c2 {
                        (x - c1) / sigma
                    } else {
                        (c2 - c1) / sigma + (1.0 + (x - c2) / sigma).ln()
                    }
                })
                .sum()
        };
        let mut cuts = vec![lo];
        cuts.extend(pins.iter().copied().filter(|&p| p > lo && p < hi));
        cuts.push(hi);
        let f: Vec<f64> = cuts.iter().map(|&x| cdf(x)).collect();
        let total = f[f.len() - 1] - f[0];
        let segments = cuts.len() - 1;
        let intervals = n - 1;
        // Largest-remainder allocation, at least 4 intervals per segment.
        let mut counts: Vec<usize> =
            (0..segments).map(|s| (((f[s + 1] - f[s]) / total * intervals as f64).floor() as usize).max(4)).collect();
        while counts.iter().sum::<usize>() > intervals {
            let s = (0..segments).max_by_key(|&s| counts[s]).expect("segments");
            counts[s] -= 1;
        }
        while counts.iter().sum::<usize>() < intervals {
            let s = (0..segments)
                .max_by(|&a, &b| {
                    let ra = (f[a + 1] - f[a]) / counts[a] as f64;
                    let rb = (f[b + 1] - f[b]) / counts[b] as f64;
                    ra.total_cmp(&rb)
                })
                .expect("segments");
            counts[s] += 1;
        }
        let mut nodes = Vec::with_capacity(n);
        nodes.push(lo);
        for s in 0..segments {
            let (a, b) = (cuts[s], cuts[s + 1]);
            for k in 1..counts[s] {
                let target = f[s] + (f[s + 1] - f[s]) * k as f64 / counts[s] as f64;
                let (mut l, mut r) = (a, b);
                for _ in 0..100 {
                    let m = 0.5 * (l + r);
                    if cdf(m) < target {
                        l = m;
                    } else {
                        r = m;
                    }
                }
                nodes.push(0.5 * (l + r));
            }
            nodes.push(b);
        }
        XGrid::from_nodes(nodes)
    }

    /// Trapezoid-weighted sum of `values`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        crate::numerics::kahan_sum(self.weights.iter().zip(values).map(|(w, v)| w * v))
    }

    /// Linear interpolation of grid values at x (clamped to the ends).
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return values[0];
        }
        if x >= self.nodes[n - 1] {
            return values[n - 1];
        }
        let j = self.nodes.partition_point(|&t| t <= x) - 1;
        let s = (x - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j]);
        (1.0 - s) * values[j] + s * values[j + 1]
    }
}

/// Outer points where 2(V − V_min)/σ² first exceeds the truncation exponent.
pub fn truncation_bounds<P: Potential + ?Sized>(model: &P, y: f64, sigma: f64, g: &WellGeometry) -> (f64, f64) {
    let vmin = g.v_min();
    let excess = |x: f64| 2.0 * (model.v(x, y) - vmin) / (sigma * sigma) - TRUNCATION_EXPONENT;
    let find = |start: f64, dir: f64| -> f64 {
        let mut step = 0.05;
        let mut inner = start;
        let mut outer = start + dir * step;
        while excess(outer) < 0.0 {
            inner = outer;
            step *= 2.0;
            outer = start + dir * step;
        }
        for _ in 0..80 {
            let m = 0.5 * (inner + outer);
            if excess(m) < 0.0 {
                inner = m;
            } else {
                outer = m;
            }
        }
        outer
    };
    (find(g.x_minus, -1.0), find(g.x_plus, 1.0))
}

/// One slice of the static problem at fixed y.
#[derive(Debug, Clone)]
pub struct FrozenSlice<P> {
    pub model: P,
    pub y: f64,
    pub sigma: f64,
    pub geometry: WellGeometry,
    pub grid: XGrid,
}

impl<P: Potential> FrozenSlice<P> {
    /// Builds the slice with its own graded grid pinned at the critical points.
    pub fn new(model: P, y: f64, sigma: f64, x_points: usize) -> Result<Self, SpectralError> {
        if x_points < 16 {
            return Err(SpectralError::GridTooSmall(x_points));
        }
        let g = find_critical_points(&model, y)?;
        let (lo, hi) = truncation_bounds(&model, y, sigma, &g);
        let pins = [g.x_minus, g.x_saddle, g.x_plus];
        let bands: Vec<(f64, f64)> = pins.iter().map(|&p| (p, p)).collect();
        let grid = XGrid::graded(lo, hi, &bands, &pins, sigma, x_points);
        Ok(FrozenSlice { model, y, sigma, geometry: g, grid })
    }

    /// Builds the slice on a caller-supplied grid (shared across nearby slices).
    pub fn with_grid(model: P, y: f64, sigma: f64, grid: XGrid) -> Result<Self, SpectralError> {
        if grid.len() < 16 {
            return Err(SpectralError::GridTooSmall(grid.len()));
        }
        let g = find_critical_points(&model, y)?;
        Ok(FrozenSlice { model, y, sigma, geometry: g, grid })
    }

    fn s2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn x_lo(&self) -> f64 {
        self.grid.nodes[0]
    }

    pub fn x_hi(&self) -> f64 {
        self.grid.nodes[self.grid.len() - 1]
    }

    pub fn v(&self, x: f64) -> f64 {
        self.model.v(x, self.y)
    }

    pub fn delta_bar(&self) -> f64 {
        self.geometry.delta_bar(self.sigma)
    }

    /// ln ∫ exp(−2V₀/σ²) over the truncated domain.
    pub fn log_z0(&self) -> Result<f64, SpectralError> {
        let g = &self.geometry;
        let s2 = self.s2();
        let bps = [self.x_lo(), g.x_minus, g.x_saddle, g.x_plus, self.x_hi()];
        Ok(quad::log_integral_exp(|x| -2.0 * self.v(x) / s2, &bps, -2.0 * g.v_min() / s2, 1e-12)?)
    }

    /// ln N with N = ∫_{x₋}^{x₊} exp(2V₀/σ²).
    pub fn log_committor_norm(&self) -> Result<f64, SpectralError> {
        let g = &self.geometry;
        let s2 = self.s2();
        let bps = [g.x_minus, g.x_saddle, g.x_plus];
        Ok(quad::log_integral_exp(|x| 2.0 * self.v(x) / s2, &bps, 2.0 * g.v_saddle / s2, 1e-12)?)
    }

    /// Static committor h₀(x), equal to 1 left of x₋ and 0 right of x₊.
    pub fn committor_h0(&self, x: f64) -> Result<f64, SpectralError> {
        let g = &self.geometry;
        if x <= g.x_minus {
            return Ok(1.0);
        }
        if x >= g.x_plus {
            return Ok(0.0);
        }
        let s2 = self.s2();
        let mut bps = vec![x];
        if x < g.x_saddle {
            bps.push(g.x_saddle);
        }
        bps.push(g.x_plus);
        let part = quad::log_integral_exp(|t| 2.0 * self.v(t) / s2, &bps, 2.0 * g.v_saddle / s2, 1e-12)?;
        Ok((part - self.log_committor_norm()?).exp().clamp(0.0, 1.0))
    }

    /// h₀ at every grid node, by composite Gauss–Legendre per cell.
    pub fn committor_on_grid(&self) -> Vec<f64> {
        let g = &self.geometry;
        let s2 = self.s2();
        let shift = 2.0 * g.v_saddle / s2;
        let integrand = |t: f64| (2.0 * self.v(t) / s2 - shift).exp();
        let x = &self.grid.nodes;
        let n = x.len();
        // tail[i] = ∫_{x_i ∨ x₋}^{x₊}, accumulated from the right.
        let mut tail = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            if i + 1 < n {
                let a = x[i].max(g.x_minus);
                let b = x[i + 1].min(g.x_plus);
                if b > a {
                    acc += gl8(integrand, a, b);
                }
            }
            tail[i] = acc;
        }
        let norm = acc;
        tail.iter()
            .zip(x)
            .map(|(t, &xi)| {
                if xi <= g.x_minus {
                    1.0
                } else if xi >= g.x_plus {
                    0.0
                } else {
                    (t / norm).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    /// Normalised π₀ density at the grid nodes (discrete normalisation).
    pub fn pi0_on_grid(&self) -> Vec<f64> {
        let s2 = self.s2();
        let vmin = self.geometry.v_min();
        let raw: Vec<f64> = self.grid.nodes.iter().map(|&x| (-2.0 * (self.v(x) - vmin) / s2).exp()).collect();
        let z = self.grid.integrate(&raw);
        raw.into_iter().map(|r| r / z).collect()
    }

    /// Δ̄ from ⟨π₀, h₀⟩ = 1/(1 + exp(2Δ̄/σ²)), evaluated on the grid.
    pub fn delta_bar_inner_product(&self) -> f64 {
        let p0 = self.pi0_on_grid();
        let h0 = self.committor_on_grid();
        let prod: Vec<f64> = p0.iter().zip(&h0).map(|(a, b)| a * b).collect();
        let p = self.grid.integrate(&prod);
        0.5 * self.s2() * (1.0 / p - 1.0).ln()
    }

    /// e^{Δ̄/σ²}h₀ − e^{−Δ̄/σ²}(1 − h₀) with the curvature-corrected Δ̄.
    pub fn phi1_approx(&self, x: f64) -> Result<f64, SpectralError> {
        self.phi1_approx_with(x, self.delta_bar())
    }

    pub fn phi1_approx_with(&self, x: f64, delta_bar: f64) -> Result<f64, SpectralError> {
        let h = self.committor_h0(x)?;
        let u = delta_bar / self.s2();
        Ok(u.exp() * h - (-u).exp() * (1.0 - h))
    }

    /// Saddle-centred Laplace integral I_n = ∫_{−δ}^{δ} u^n e^{2(V(x₀+u)−V(x₀))/σ²} du.
    pub fn laplace_in(&self, n: u32, delta: f64) -> Result<f64, SpectralError> {
        let (x0, v0, s2) = (self.geometry.x_saddle, self.geometry.v_saddle, self.s2());
        Ok(quad::adaptive(|u| u.powi(n as i32) * (2.0 * (self.v(x0 + u) - v0) / s2).exp(), &[-delta, 0.0, delta], 1e-13, 1e-300)?)
    }

    /// J_n(x) = e^{−2Ṽ(x)/σ²} ∫_x^δ u^n e^{2Ṽ(u)/σ²} du with Ṽ measured from the saddle.
    pub fn laplace_jn(&self, n: u32, x: f64, delta: f64) -> Result<f64, SpectralError> {
        let (x0, v0, s2) = (self.geometry.x_saddle, self.geometry.v_saddle, self.s2());
        let vt = |u: f64| self.v(x0 + u) - v0;
        let vx = vt(x);
        let mut bps = vec![x];
        if x < 0.0 && delta > 0.0 {
            bps.push(0.0);
        }
        bps.push(delta);
        Ok(quad::adaptive(|u| u.powi(n as i32) * (2.0 * (vt(u) - vx) / s2).exp(), &bps, 1e-13, 1e-300)?)
    }
}

/// Kramers rates and asymmetry functions of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KramersRates {
    pub r_minus: f64,
    pub r_plus: f64,
    pub lambda1: f64,
    pub a: f64,
    pub b: f64,
    pub delta_bar: f64,
}

/// A = tanh(u), B = sech(u), without overflow for large |u|.
pub fn asymmetry(u: f64) -> (f64, f64) {
    let e = (-2.0 * u.abs()).exp();
    let b = 2.0 * (-u.abs()).exp() / (1.0 + e);
    (u.tanh(), b)
}

pub fn kramers_rates(g: &WellGeometry, sigma: f64) -> KramersRates {
    let s2 = sigma * sigma;
    let r_minus = g.omega_minus * g.omega0 / (2.0 * PI) * (-2.0 * g.h_minus / s2).exp();
    let r_plus = g.omega_plus * g.omega0 / (2.0 * PI) * (-2.0 * g.h_plus / s2).exp();
    let delta_bar = g.delta_bar(sigma);
    let (a, b) = asymmetry(delta_bar / s2);
    KramersRates { r_minus, r_plus, lambda1: r_minus + r_plus, a, b, delta_bar }
}

/// Everything the `spectral` output reports for one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSlice {
    pub y: f64,
    pub z0: f64,
    pub n: f64,
    pub rates: KramersRates,
    pub lambda1_numeric: f64,
}

impl RateSlice {
    /// Z₀·N·λ₁·B²/(2σ²), close to 1 for small σ.
    pub fn identity_ratio(&self, sigma: f64, use_numeric: bool) -> f64 {
        let l = if use_numeric { self.lambda1_numeric } else { self.rates.lambda1 };
        self.z0 * self.n * l * self.rates.b.powi(2) / (2.0 * sigma * sigma)
    }
}

pub fn rate_slice<P: Potential>(slice: &FrozenSlice<P>) -> Result<RateSlice, SpectralError> {
    let solved = eigen_solve(slice, 1)?;
    Ok(RateSlice {
        y: slice.y,
        z0: slice.log_z0()?.exp(),
        n: slice.log_committor_norm()?.exp(),
        rates: kramers_rates(&slice.geometry, slice.sigma),
        lambda1_numeric: solved.eigenvalues[1],
    })
}

/// Laplace asymptotic values of the slice integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReference {
    pub z0: f64,
    pub n: f64,
    pub i0: f64,
    pub i2: f64,
    pub j1_at_saddle: f64,
}

pub fn laplace_reference(g: &WellGeometry, sigma: f64) -> LaplaceReference {
    let s2 = sigma * sigma;
    let sp = PI.sqrt();
    LaplaceReference {
        z0: sp * sigma * ((-2.0 * g.v_minus / s2).exp() / g.omega_minus + (-2.0 * g.v_plus / s2).exp() / g.omega_plus),
        n: sp * sigma / g.omega0 * (2.0 * g.v_saddle / s2).exp(),
        i0: sp * sigma / g.omega0,
        i2: 0.5 * sp * sigma.powi(3) / g.omega0.powi(3),
        j1_at_saddle: s2 / (2.0 * g.omega0 * g.omega0),
    }
}

/// Eigenpairs of the slice generator on the slice grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub y: f64,
    pub eigenvalues: Vec<f64>,
    /// φ_n at the grid nodes, normalised so Σ w π₀ φ_n φ_m = δ_nm.
    pub phi: Vec<Vec<f64>>,
    /// π₀ density at the grid nodes.
    pub pi0: Vec<f64>,
    pub grid: XGrid,
    /// Index pairs (n, n+1) whose eigenvalues are within 1e-6 relative.
    pub near_degenerate: Vec<usize>,
}

impl SpectralData {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// π_n = π₀ φ_n.
    pub fn pi_n(&self, n: usize) -> Vec<f64> {
        self.pi0.iter().zip(&self.phi[n]).map(|(p, f)| p * f).collect()
    }

    /// ψ_n = √π₀ φ_n (L²-normalised Schrödinger eigenfunction).
    pub fn psi(&self, n: usize) -> Vec<f64> {
        self.pi0.iter().zip(&self.phi[n]).map(|(p, f)| p.sqrt() * f).collect()
    }

    /// Gram matrix ⟨π_n, φ_m⟩ on the grid.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let k = self.n_modes();
        (0..k)
            .map(|n| {
                let pn = self.pi_n(n);
                (0..k)
                    .map(|m| {
                        let v: Vec<f64> = pn.iter().zip(&self.phi[m]).map(|(a, b)| a * b).collect();
                        self.grid.integrate(&v)
                    })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn flip(&mut self, n: usize) {
        for v in &mut self.phi[n] {
            *v = -*v;
        }
    }
}

/// Lowest `n_max + 1` eigenpairs of the slice generator (σ²/2)∂ₓₓ − ∂ₓV₀∂ₓ,
/// discretised as a reversible nearest-neighbour chain on the grid. The chain
/// is symmetrised by the square root of its Boltzmann weights, which is the
/// discrete counterpart of the Schrödinger conjugation; the constant function
/// stays an exact null vector.
pub fn eigen_solve<P: Potential>(slice: &FrozenSlice<P>, n_max: usize) -> Result<SpectralData, SpectralError> {
    let s2 = slice.s2();
    let grid = &slice.grid;
    let x = &grid.nodes;
    let w = &grid.weights;
    let n = x.len();
    let vmin = slice.geometry.v_min();
    let v: Vec<f64> = x.iter().map(|&xi| slice.v(xi) - vmin).collect();
    let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    let c = 0.5 * s2;

    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n - 1 {
        diag[i] += c / (w[i] * h[i]) * (-(v[i + 1] - v[i]) / s2).exp();
        diag[i + 1] += c / (w[i + 1] * h[i]) * (-(v[i] - v[i + 1]) / s2).exp();
        off[i] = -c / (h[i] * (w[i] * w[i + 1]).sqrt());
    }
    let boltz: Vec<f64> = v.iter().map(|&vi| (-2.0 * vi / s2).exp()).collect();
    let z: f64 = crate::numerics::kahan_sum(w.iter().zip(&boltz).map(|(a, b)| a * b));
    let pi0: Vec<f64> = boltz.iter().map(|b| b / z).collect();
    let mu: Vec<f64> = w.iter().zip(&pi0).map(|(a, b)| a * b).collect();
    let ground: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();

    let t = SymTridiagonal::new(diag, off);
    let pairs = t.lowest(n_max + 1, &[ground])?;

    let mut phi: Vec<Vec<f64>> = pairs.iter().map(|(_, psi)| psi.iter().zip(&mu).map(|(p, m)| p / m.sqrt()).collect()).collect();
    phi[0] = vec![1.0; n];

    // Dirichlet form of the normalised φ: no cancellation against the diagonal.
    let edge: Vec<f64> = (0..n - 1).map(|i| c / h[i] * (-(v[i] + v[i + 1]) / s2).exp() / z).collect();
    let eigenvalues: Vec<f64> = phi
        .iter()
        .map(|f| {
            let form = crate::numerics::kahan_sum((0..n - 1).map(|i| edge[i] * (f[i + 1] - f[i]).powi(2)));
            let norm = crate::numerics::kahan_sum(mu.iter().zip(f).map(|(m, fi)| m * fi * fi));
            form / norm
        })
        .collect();

    let mut data = SpectralData { y: slice.y, eigenvalues, phi, pi0, grid: grid.clone(), near_degenerate: Vec::new() };
    for k in 1..data.n_modes().saturating_sub(1) {
        let (a, b) = (data.eigenvalues[k], data.eigenvalues[k + 1]);
        if (b - a).abs() < 1e-6 * b.abs() {
            data.near_degenerate.push(k);
        }
    }
    if data.n_modes() > 1 && grid.interpolate(&data.phi[1], slice.geometry.x_minus) < 0.0 {
        data.flip(1);
    }
    for k in 2..data.n_modes() {
        // Leftmost lobe exceeding a tenth of the peak is positive.
        let psi = data.psi(k);
        let peak = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = psi.iter().find(|v| v.abs() > 0.1 * peak) {
            if *first < 0.0 {
                data.flip(k);
            }
        }
    }
    Ok(data)
}

/// Flips modes of `other` (same grid) so each has positive overlap with `reference`.
pub fn align_signs(reference: &SpectralData, other: &mut SpectralData) -> Result<(), SpectralError> {
    for k in 1..reference.n_modes().min(other.n_modes()) {
        let (a, b) = (reference.psi(k), other.psi(k));
        let overlap: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        if overlap.abs() < 0.5 {
            return Err(SpectralError::SignAmbiguity { mode: k, y: other.y, overlap });
        }
        if overlap < 0.0 {
            other.flip(k);
        }
    }
    Ok(())
}

/// f_nm = σ²⟨∂_yπ_m, φ_n⟩ and g_nm = σ⁴⟨∂_yyπ_m, φ_n⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixElements {
    pub y: f64,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

/// Matrix elements at the centre slice from slices at y − dy and y + dy that
/// share its grid. Neighbour signs are aligned to the centre first.
pub fn matrix_elements(
    center: &SpectralData,
    minus: &mut SpectralData,
    plus: &mut SpectralData,
    dy: f64,
    sigma: f64,
) -> Result<MatrixElements, SpectralError> {
    align_signs(center, minus)?;
    align_signs(center, plus)?;
    let k = center.n_modes();
    let s2 = sigma * sigma;
    let grid = &center.grid;
    let mut f = vec![vec![0.0; k]; k];
    let mut g = vec![vec![0.0; k]; k];
    for m in 0..k {
        let (pm, pc, pp) = (minus.pi_n(m), center.pi_n(m), plus.pi_n(m));
        let d1: Vec<f64> = pp.iter().zip(&pm).map(|(a, b)| (a - b) / (2.0 * dy)).collect();
        let d2: Vec<f64> = (0..pc.len()).map(|i| (pp[i] - 2.0 * pc[i] + pm[i]) / (dy * dy)).collect();
        for n in 0..k {
            let phi = &center.phi[n];
            let a: Vec<f64> = d1.iter().zip(phi).map(|(u, v)| u * v).collect();
            let b: Vec<f64> = d2.iter().zip(phi).map(|(u, v)| u * v).collect();
            f[n][m] = s2 * grid.integrate(&a);
            g[n][m] = s2 * s2 * grid.integrate(&b);
        }
    }
    Ok(MatrixElements { y: center.y, f, g })
}

/// Spectral data at y − dy, y, y + dy on one shared grid, signs aligned.
#[derive(Debug, Clone)]
pub struct SliceStencil {
    pub minus: SpectralData,
    pub center: SpectralData,
    pub plus: SpectralData,
    pub elements: MatrixElements,
    pub dy: f64,
}

impl SliceStencil {
    /// Reverses the sign of mode k in all three slices and in the matrix
    /// elements (row k and column k; the diagonal entry is unchanged).
    pub fn flip_mode(&mut self, k: usize) {
        self.minus.flip(k);
        self.center.flip(k);
        self.plus.flip(k);
        for m in 0..self.elements.f.len() {
            self.elements.f[k][m] = -self.elements.f[k][m];
            self.elements.g[k][m] = -self.elements.g[k][m];
            self.elements.f[m][k] = -self.elements.f[m][k];
            self.elements.g[m][k] = -self.elements.g[m][k];
        }
    }
}

pub fn slice_stencil<P: Potential + Clone>(
    model: &P,
    y: f64,
    sigma: f64,
    grid: &XGrid,
    n_max: usize,
    dy: f64,
) -> Result<SliceStencil, SpectralError> {
    let build = |yy: f64| -> Result<SpectralData, SpectralError> {
        eigen_solve(&FrozenSlice::with_grid(model.clone(), yy, sigma, grid.clone())?, n_max)
    };
    let center = build(y)?;
    let mut minus = build(y - dy)?;
    let mut plus = build(y + dy)?;
    let elements = matrix_elements(&center, &mut minus, &mut plus, dy, sigma)?;
    Ok(SliceStencil { minus, center, plus, elements, dy })
}

/// A grid shared by all slices over y_grid: union of truncated domains, graded
/// towards the x-ranges swept by each critical point.
pub fn common_grid<P: Potential>(model: &P, sigma: f64, y_grid: &[f64], x_points: usize) -> Result<XGrid, SpectralError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut bands = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    for &y in y_grid {
        let g = find_critical_points(model, y)?;
        let (l, h) = truncation_bounds(model, y, sigma, &g);
        lo = lo.min(l);
        hi = hi.max(h);
        for (band, x) in bands.iter_mut().zip([g.x_minus, g.x_saddle, g.x_plus]) {
            band.0 = band.0.min(x);
            band.1 = band.1.max(x);
        }
    }
    Ok(XGrid::graded(lo, hi, &bands, &[], sigma, x_points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_tilted_quartic;

    #[test]
    fn grid_contains_critical_points_and_is_increasing() {
        let s = FrozenSlice::new(make_tilted_quartic(1.0, 0.1, 0.0), 0.1, 0.4, 512).unwrap();
        let x = &s.grid.nodes;
        assert_eq!(x.len(), 512);
        assert!(x.windows(2).all(|p| p[1] > p[0]));
        for c in [s.geometry.x_minus, s.geometry.x_saddle, s.geometry.x_plus] {
            assert!(x.contains(&c));
        }
        let total: f64 = s.grid.weights.iter().sum();
        assert!((total - (s.x_hi() - s.x_lo())).abs() < 1e-12);
    }

    #[test]
    fn truncation_mass_is_negligible() {
        let s = FrozenSlice::new(make_tilted_quartic(1.0, 0.1, 0.0), 0.0, 0.45, 256).unwrap();
        let s2 = 0.45f64 * 0.45;
        let vmin = s.geometry.v_min();
        let f = |x: f64| (-2.0 * (s.v(x) - vmin) / s2).exp();
        let left = quad::adaptive(f, &[s.x_lo() - 5.0, s.x_lo()], 1e-10, 1e-300).unwrap();
        let right = quad::adaptive(f, &[s.x_hi(), s.x_hi() + 5.0], 1e-10, 1e-300).unwrap();
        let z = (s.log_z0().unwrap() + 2.0 * vmin / s2).exp();
        assert!((left + right) / z < 1e-12);
    }

    #[test]
    fn committor_symmetry_and_bounds() {
        let s = FrozenSlice::new(make_tilted_quartic(1.0, 0.0, 0.0), 0.0, 0.4, 512).unwrap();
        assert_eq!(s.committor_h0(-1.0).unwrap(), 1.0);
        assert_eq!(s.committor_h0(1.0).unwrap(), 0.0);
        assert!((s.committor_h0(0.0).unwrap() - 0.5).abs() < 1e-11);
        let h = s.committor_on_grid();
        assert!(h.windows(2).all(|p| p[1] <= p[0] + 1e-15));
        let mid = s.grid.nodes.iter().position(|&x| x == s.geometry.x_saddle).unwrap();
        assert!((h[mid] - 0.5).abs() < 1e-11);
    }

    #[test]
    fn asymmetry_identity() {
        for u in [-800.0, -3.0, 0.0, 0.2, 40.0, 900.0] {
            let (a, b) = asymmetry(u);
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
            assert!(b > 0.0 || u.abs() > 700.0);
        }
    }

    #[test]
    fn eigen_ground_state_and_orthonormality() {
        let s = FrozenSlice::new(make_tilted_quartic(1.0, 0.1, 0.0), 0.1, 0.4, 1024).unwrap();
        let d = eigen_solve(&s, 6).unwrap();
        assert!(d.eigenvalues[0].abs() < 1e-8);
        assert!(d.eigenvalues.windows(2).all(|p| p[1] > p[0]));
        let gram = d.gram();
        for (i, row) in gram.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6, "({i},{j}) = {v}");
            }
        }
        assert!(d.grid.interpolate(&d.phi[1], s.geometry.x_minus) > 0.0);
    }
}
