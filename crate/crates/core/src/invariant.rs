//! Invariant density of the forced diffusion as an eigenfunction expansion
//! π = π₀[1 + Σ αₙ φₙ] over frozen slices: first- and second-order equations
//! for δ₁, quasi-static and fully coupled coefficients, and the assembled
//! density on the (x, y) grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jump::{periodic_derivative, periodic_lagrange, periodic_relaxation, JumpError, RateProfile, DELTA_GRID};
use crate::numerics::fourier::differentiation_matrix;
use crate::numerics::PeriodicSpline;
use crate::potential::{find_critical_points, Potential, PotentialError, WellGeometry};
use crate::spectral::{
    asymmetry, common_grid, kramers_rates, slice_stencil, FrozenSlice, SliceStencil, SpectralError, XGrid, DEFAULT_DY,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Jump(#[from] JumpError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("collocation system of size {0} is numerically singular")]
    SingularSystem(usize),
    #[error("mode {mode} changes sign once around the period (overlap {overlap})")]
    Monodromy { mode: usize, overlap: f64 },
    #[error("y grid needs at least 16 points, got {0}")]
    TooFewSlices(usize),
}

/// Default truncation of the expansion.
pub const DEFAULT_N_MAX: usize = 8;

/// Spectral data of every slice of a uniform y-grid, on one shared x-grid,
/// with eigenfunction signs continued consistently around the period.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    pub sigma: f64,
    pub n_max: usize,
    pub y: Vec<f64>,
    pub grid: XGrid,
    pub geometry: Vec<WellGeometry>,
    pub stencils: Vec<SliceStencil>,
    /// Δ̄ from ⟨π₀, h₀⟩ on the shared grid.
    pub delta_bar: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn overlap(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * b).sum()
}

impl SpectralProfile {
    pub fn build<P: Potential + Clone + Sync>(
        model: &P,
        sigma: f64,
        y_points: usize,
        x_points: usize,
        n_max: usize,
    ) -> Result<Self, InvariantError> {
        if y_points < 16 {
            return Err(InvariantError::TooFewSlices(y_points));
        }
        let y: Vec<f64> = (0..y_points).map(|j| j as f64 / y_points as f64).collect();
        let grid = common_grid(model, sigma, &y, x_points)?;
        let built: Result<Vec<_>, InvariantError> = y
            .par_iter()
            .map(|&yj| {
                let st = slice_stencil(model, yj, sigma, &grid, n_max, DEFAULT_DY)?;
                let slice = FrozenSlice::with_grid(model.clone(), yj, sigma, grid.clone())?;
                Ok((st, slice.geometry, slice.delta_bar_inner_product()))
            })
            .collect();
        let mut stencils = Vec::with_capacity(y_points);
        let mut geometry = Vec::with_capacity(y_points);
        let mut delta_bar = Vec::with_capacity(y_points);
        for (st, g, d) in built? {
            stencils.push(st);
            geometry.push(g);
            delta_bar.push(d);
        }
        align_around_period(&mut stencils)?;
        let s2 = sigma * sigma;
        let (a, b) = delta_bar.iter().map(|d| asymmetry(d / s2)).unzip();
        Ok(SpectralProfile { sigma, n_max, y, grid, geometry, stencils, delta_bar, a, b })
    }

    pub fn y_points(&self) -> usize {
        self.y.len()
    }

    /// λₙ at slice j.
    pub fn lambda(&self, j: usize, n: usize) -> f64 {
        self.stencils[j].center.eigenvalues[n]
    }

    pub fn lambda1(&self) -> Vec<f64> {
        (0..self.y_points()).map(|j| self.lambda(j, 1)).collect()
    }

    pub fn f(&self, j: usize, n: usize, m: usize) -> f64 {
        self.stencils[j].elements.f[n][m]
    }

    pub fn g(&self, j: usize, n: usize, m: usize) -> f64 {
        self.stencils[j].elements.g[n][m]
    }

    /// Rate profile with the numerical λ₁ and the inner-product asymmetry;
    /// r± are the Kramers rates of each slice.
    pub fn rate_profile(&self, epsilon: f64) -> Result<RateProfile, InvariantError> {
        let (rm, rp): (Vec<f64>, Vec<f64>) = self
            .geometry
            .iter()
            .map(|g| {
                let k = kramers_rates(g, self.sigma);
                (k.r_minus, k.r_plus)
            })
            .unzip();
        Ok(RateProfile::with_lambda1(&rm, &rp, &self.lambda1(), &self.a, epsilon)?)
    }

    /// dΔ̄/dy from the periodic spline through the samples.
    pub fn delta_bar_derivative(&self) -> Vec<f64> {
        let s = PeriodicSpline::new(&self.delta_bar);
        self.y.iter().map(|&y| s.derivative(y)).collect()
    }
}

/// Makes every mode's sign continuous from one slice to the next; a sign
/// change after a full turn is an error.
fn align_around_period(stencils: &mut [SliceStencil]) -> Result<(), InvariantError> {
    let n = stencils.len();
    let modes = stencils[0].center.n_modes();
    for j in 1..n {
        for k in 1..modes {
            let o = overlap(&stencils[j - 1].center.psi(k), &stencils[j].center.psi(k));
            if o.abs() < 0.5 {
                return Err(SpectralError::SignAmbiguity { mode: k, y: stencils[j].center.y, overlap: o }.into());
            }
            if o < 0.0 {
                stencils[j].flip_mode(k);
            }
        }
    }
    for k in 1..modes {
        let o = overlap(&stencils[n - 1].center.psi(k), &stencils[0].center.psi(k));
        if o < 0.5 {
            return Err(InvariantError::Monodromy { mode: k, overlap: o });
        }
    }
    Ok(())
}

/// Which correction terms enter the first-order δ₁ equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corrections {
    pub p1: bool,
    pub w1: bool,
    /// Coupling to the quasi-static higher modes.
    pub w1_tilde: bool,
}

impl Corrections {
    pub const NONE: Corrections = Corrections { p1: false, w1: false, w1_tilde: false };
    pub const ALL: Corrections = Corrections { p1: true, w1: true, w1_tilde: true };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationWarning {
    /// sup |δ₁ with − δ₁ without the higher-mode term| / sup |δ₁ without|.
    pub relative_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta1Solution {
    pub y: Vec<f64>,
    pub delta1: Vec<f64>,
    pub residual: f64,
    pub warning: Option<TruncationWarning>,
}

impl Delta1Solution {
    pub fn at(&self, y: f64) -> f64 {
        periodic_lagrange(&self.delta1, y)
    }

    pub fn sample(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.at(y)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.delta1.iter().sum::<f64>() / self.delta1.len() as f64
    }
}

fn first_order_coefficients(sp: &SpectralProfile, epsilon: f64, c: Corrections) -> (Vec<f64>, Vec<f64>) {
    let e = epsilon / (sp.sigma * sp.sigma);
    let dbar = sp.delta_bar_derivative();
    (0..sp.y_points())
        .map(|j| {
            let (l1, a, b) = (sp.lambda(j, 1), sp.a[j], sp.b[j]);
            let p1 = if c.p1 { -sp.f(j, 1, 1) - dbar[j] * a } else { 0.0 };
            let w1 = if c.w1 { dbar[j] * b * b + b * sp.f(j, 1, 0) } else { 0.0 };
            let mut k = l1 - e * p1;
            let mut s = k * a + e * w1;
            if c.w1_tilde {
                // Higher modes at their quasi-static values, which are affine in δ₁.
                for m in 2..=sp.n_max {
                    let cm = sp.f(j, 1, m) / sp.lambda(j, m);
                    k -= e * e * cm * sp.f(j, m, 1);
                    s -= e * e * cm * (b * sp.f(j, m, 0) + a * sp.f(j, m, 1));
                }
            }
            (k, s)
        })
        .unzip()
}

fn relax(k: &[f64], s: &[f64], epsilon: f64) -> Result<Delta1Solution, InvariantError> {
    let ks = PeriodicSpline::new(k);
    let ss = PeriodicSpline::new(s);
    let delta1 = periodic_relaxation(&ks, &ss, epsilon, DELTA_GRID)?;
    let y: Vec<f64> = (0..DELTA_GRID).map(|j| j as f64 / DELTA_GRID as f64).collect();
    let d = periodic_derivative(&delta1);
    let residual =
        (0..DELTA_GRID).map(|j| (epsilon * d[j] + ks.eval(y[j]) * delta1[j] - ss.eval(y[j])).abs()).fold(0.0, f64::max);
    Ok(Delta1Solution { y, delta1, residual, warning: None })
}

/// Periodic δ₁ of ε δ₁′ = [−λ₁ + (ε/σ²)p₁](δ₁ − A) + (ε/σ²)w₁ + (ε/σ²)B Σ_{m≥2} f₁ₘ αₘ*.
pub fn solve_delta1_first_order(
    sp: &SpectralProfile,
    epsilon: f64,
    corrections: Corrections,
) -> Result<Delta1Solution, InvariantError> {
    let (k, s) = first_order_coefficients(sp, epsilon, corrections);
    let mut sol = relax(&k, &s, epsilon)?;
    if corrections.w1_tilde {
        let without = Corrections { w1_tilde: false, ..corrections };
        let (k0, s0) = first_order_coefficients(sp, epsilon, without);
        let base = relax(&k0, &s0, epsilon)?;
        let scale = base.delta1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let shift = sol.delta1.iter().zip(&base.delta1).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let rel = if scale > 0.0 { shift / scale } else { shift };
        if rel > 0.1 {
            sol.warning = Some(TruncationWarning { relative_shift: rel });
        }
    }
    Ok(sol)
}

/// Collocation points for the second-order solve.
pub const COLLOCATION_POINTS: usize = 256;

/// Periodic δ₁ of (ρ²/2)εσ²δ₁″ − εδ₁′ − λ₁(δ₁ − A) = 0 by trigonometric collocation.
pub fn solve_delta1_second_order(
    profile: &RateProfile,
    sigma: f64,
    rho: f64,
    points: usize,
) -> Result<Delta1Solution, InvariantError> {
    let n = points;
    let eps = profile.epsilon;
    let d = differentiation_matrix(n);
    let d2 = &d * &d;
    let c2 = 0.5 * rho * rho * eps * sigma * sigma;
    let y: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let lam: Vec<f64> = y.iter().map(|&t| profile.lambda1(t)).collect();
    let mut m = d2 * c2 - d * eps;
    for j in 0..n {
        m[(j, j)] -= lam[j];
    }
    let rhs = DVector::from_iterator(n, y.iter().zip(&lam).map(|(&t, l)| -l * profile.a(t)));
    let sol = m.clone().lu().solve(&rhs).ok_or(InvariantError::SingularSystem(n))?;
    let residual = (&m * &sol - &rhs).amax();
    if !residual.is_finite() {
        return Err(InvariantError::SingularSystem(n));
    }
    Ok(Delta1Solution { y, delta1: sol.iter().copied().collect(), residual, warning: None })
}

/// Coefficients αₙ(y_j), n = 0..=n_max, from the full truncated periodic system
/// εαₖ′ − ε(ρ²σ²/2)αₖ″ = −λₖαₖ − (ε/σ²)Σ αₙfₖₙ + ερ²Σ αₙ′fₖₙ + (ερ²/2σ²)Σ αₙgₖₙ
/// with α₀ ≡ 1, solved by trigonometric collocation on the slice grid.
pub fn solve_coupled(sp: &SpectralProfile, epsilon: f64, rho: f64) -> Result<Vec<Vec<f64>>, InvariantError> {
    let ny = sp.y_points();
    let k_max = sp.n_max;
    let size = ny * k_max;
    let s2 = sp.sigma * sp.sigma;
    let r2 = rho * rho;
    let d = differentiation_matrix(ny);
    let d2 = &d * &d;
    let idx = |k: usize, j: usize| (k - 1) * ny + j;
    let mut m = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for k in 1..=k_max {
        for j in 0..ny {
            let row = idx(k, j);
            for l in 0..ny {
                m[(row, idx(k, l))] += epsilon * d[(j, l)] - epsilon * 0.5 * r2 * s2 * d2[(j, l)];
            }
            m[(row, idx(k, j))] += sp.lambda(j, k);
            for n in 1..=k_max {
                let (f, g) = (sp.f(j, k, n), sp.g(j, k, n));
                m[(row, idx(n, j))] += epsilon / s2 * f - epsilon * r2 / (2.0 * s2) * g;
                if r2 > 0.0 {
                    for l in 0..ny {
                        m[(row, idx(n, l))] -= epsilon * r2 * f * d[(j, l)];
                    }
                }
            }
            rhs[row] = -epsilon / s2 * sp.f(j, k, 0) + epsilon * r2 / (2.0 * s2) * sp.g(j, k, 0);
        }
    }
    let sol = m.lu().solve(&rhs).ok_or(InvariantError::SingularSystem(size))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(InvariantError::SingularSystem(size));
    }
    let mut alpha = vec![vec![1.0; ny]];
    for k in 1..=k_max {
        alpha.push((0..ny).map(|j| sol[idx(k, j)]).collect());
    }
    Ok(alpha)
}

/// αₙ*(y) = −(ε/σ²)(1/λₙ)[fₙ₀ + ((A − δ₁)/B)fₙ₁] for n ≥ 2 on the slice grid.
pub fn quasi_static_alpha(sp: &SpectralProfile, epsilon: f64, delta1: &[f64]) -> Vec<Vec<f64>> {
    let e = epsilon / (sp.sigma * sp.sigma);
    (2..=sp.n_max)
        .map(|n| {
            (0..sp.y_points())
                .map(|j| {
                    let alpha1 = (sp.a[j] - delta1[j]) / sp.b[j];
                    -e / sp.lambda(j, n) * (sp.f(j, n, 0) + alpha1 * sp.f(j, n, 1))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPerp {
    /// Rows n = 2..=n_max, columns y_j.
    pub quasi_static: Vec<Vec<f64>>,
    pub refined: Option<Vec<Vec<f64>>>,
    /// Per mode, sup_y |refined − quasi-static| / (ε²/(σ⁴ B λₙ)).
    pub gap_over_scale: Vec<f64>,
}

/// Higher-mode coefficients given δ₁ on the slice grid; `refine` adds the full
/// coupled solve for comparison.
pub fn solve_alpha_perp(
    sp: &SpectralProfile,
    epsilon: f64,
    rho: f64,
    delta1: &[f64],
    refine: bool,
) -> Result<AlphaPerp, InvariantError> {
    let quasi_static = quasi_static_alpha(sp, epsilon, delta1);
    let mut gap_over_scale = Vec::new();
    let refined = if refine {
        let full = solve_coupled(sp, epsilon, rho)?;
        let s4 = sp.sigma.powi(4);
        for n in 2..=sp.n_max {
            let worst = (0..sp.y_points())
                .map(|j| {
                    let scale = epsilon * epsilon / (s4 * sp.b[j] * sp.lambda(j, n));
                    (full[n][j] - quasi_static[n - 2][j]).abs() / scale
                })
                .fold(0.0, f64::max);
            gap_over_scale.push(worst);
        }
        Some(full[2..].to_vec())
    } else {
        None
    };
    Ok(AlphaPerp { quasi_static, refined, gap_over_scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpansionMethod {
    /// Full truncated periodic system for all coefficients.
    Coupled,
    /// δ₁ from its reduced equation, higher modes at quasi-static values.
    QuasiStatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantExpansion {
    pub epsilon: f64,
    pub rho: f64,
    pub sigma: f64,
    pub n_max: usize,
    pub method: ExpansionMethod,
    pub y: Vec<f64>,
    /// αₙ(y_j) for n = 0..=n_max; α₀ ≡ 1.
    pub alpha: Vec<Vec<f64>>,
    /// δ₁ = A − Bα₁ on the slice grid.
    pub delta1: Vec<f64>,
}

impl InvariantExpansion {
    pub fn alpha1(&self) -> &[f64] {
        &self.alpha[1]
    }

    pub fn delta1_at(&self, y: f64) -> f64 {
        PeriodicSpline::new(&self.delta1).eval(y)
    }
}

pub fn expand(
    sp: &SpectralProfile,
    epsilon: f64,
    rho: f64,
    method: ExpansionMethod,
) -> Result<InvariantExpansion, InvariantError> {
    let ny = sp.y_points();
    let alpha = match method {
        ExpansionMethod::Coupled => solve_coupled(sp, epsilon, rho)?,
        ExpansionMethod::QuasiStatic => {
            let d = if rho > 0.0 {
                solve_delta1_second_order(&sp.rate_profile(epsilon)?, sp.sigma, rho, COLLOCATION_POINTS)?
            } else {
                solve_delta1_first_order(sp, epsilon, Corrections::ALL)?
            };
            let d1 = d.sample(&sp.y);
            let mut alpha = vec![vec![1.0; ny]];
            alpha.push((0..ny).map(|j| (sp.a[j] - d1[j]) / sp.b[j]).collect());
            alpha.extend(quasi_static_alpha(sp, epsilon, &d1));
            alpha
        }
    };
    let delta1 = (0..ny).map(|j| sp.a[j] - sp.b[j] * alpha[1][j]).collect();
    Ok(InvariantExpansion { epsilon, rho, sigma: sp.sigma, n_max: sp.n_max, method, y: sp.y.clone(), alpha, delta1 })
}

/// π on the (slice, x-node) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantDensity {
    pub y: Vec<f64>,
    pub grid: XGrid,
    /// values[j][i] = π(x_i, y_j).
    pub values: Vec<Vec<f64>>,
    pub x_saddle: Vec<f64>,
    /// ∫∫π before normalisation.
    pub raw_mass: f64,
    pub min_value: f64,
    /// Some grid value was negative: the truncated expansion is unreliable.
    pub negative: bool,
}

pub fn assemble_pi(sp: &SpectralProfile, exp: &InvariantExpansion) -> InvariantDensity {
    let ny = sp.y_points();
    let nx = sp.grid.len();
    let mut values: Vec<Vec<f64>> = (0..ny)
        .map(|j| {
            let c = &sp.stencils[j].center;
            (0..nx)
                .map(|i| {
                    let corr: f64 = (1..=exp.n_max).map(|n| exp.alpha[n][j] * c.phi[n][i]).sum();
                    c.pi0[i] * (1.0 + corr)
                })
                .collect()
        })
        .collect();
    let raw_mass = values.iter().map(|row| sp.grid.integrate(row)).sum::<f64>() / ny as f64;
    let mut min_value = f64::INFINITY;
    for row in &mut values {
        for v in row.iter_mut() {
            *v /= raw_mass;
            min_value = min_value.min(*v);
        }
    }
    InvariantDensity {
        y: sp.y.clone(),
        grid: sp.grid.clone(),
        values,
        x_saddle: sp.geometry.iter().map(|g| g.x_saddle).collect(),
        raw_mass,
        min_value,
        negative: min_value < 0.0,
    }
}

/// ∫_{x₀}^{x} of the piecewise-linear interpolant of `values` on `nodes`.
fn cumulative_linear(nodes: &[f64], values: &[f64], cum: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    if x <= nodes[0] {
        return 0.0;
    }
    if x >= nodes[n - 1] {
        return cum[n - 1];
    }
    let i = nodes.partition_point(|&t| t <= x) - 1;
    let h = nodes[i + 1] - nodes[i];
    let t = x - nodes[i];
    cum[i] + t * (values[i] + 0.5 * (values[i + 1] - values[i]) * t / h)
}

fn cumulative_row(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let mut cum = vec![0.0; nodes.len()];
    for i in 1..nodes.len() {
        cum[i] = cum[i - 1] + 0.5 * (nodes[i] - nodes[i - 1]) * (values[i] + values[i - 1]);
    }
    cum
}

impl InvariantDensity {
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|row| self.grid.integrate(row)).sum::<f64>() / self.y.len() as f64
    }

    /// π at an arbitrary point: linear in x, periodic cubic in y.
    pub fn density_at(&self, x: f64, y: f64) -> f64 {
        let column: Vec<f64> = self.values.iter().map(|row| self.grid.interpolate(row, x)).collect();
        PeriodicSpline::new(&column).eval(y)
    }

    /// Mass left of the saddle on each slice.
    pub fn p_minus(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.x_saddle)
            .map(|(row, &xs)| {
                let cum = cumulative_row(&self.grid.nodes, row);
                cumulative_linear(&self.grid.nodes, row, &cum, xs)
            })
            .collect()
    }

    /// Mass of each (y-bin, x-bin) cell. `y_bins` must divide the slice
    /// count; slices on a bin edge are split evenly between the two bins.
    pub fn bin_masses(&self, x_edges: &[f64], y_bins: usize) -> Vec<Vec<f64>> {
        let ny = self.y.len();
        assert!(y_bins > 0 && ny.is_multiple_of(y_bins), "y_bins must divide the slice count");
        let per = ny / y_bins;
        let rows: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|row| {
                let cum = cumulative_row(&self.grid.nodes, row);
                let at: Vec<f64> = x_edges.iter().map(|&e| cumulative_linear(&self.grid.nodes, row, &cum, e)).collect();
                at.windows(2).map(|w| w[1] - w[0]).collect()
            })
            .collect();
        (0..y_bins)
            .map(|b| {
                let mut acc = vec![0.0; x_edges.len() - 1];
                for s in 0..=per {
                    let j = (b * per + s) % ny;
                    let w = if s == 0 || s == per { 0.5 } else { 1.0 } / ny as f64;
                    for (a, v) in acc.iter_mut().zip(&rows[j]) {
                        *a += w * v;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Geometry sweep used by callers that need x±, saddle along the slice grid.
pub fn geometry_sweep<P: Potential + ?Sized>(model: &P, y: &[f64]) -> Result<Vec<WellGeometry>, InvariantError> {
    Ok(y.iter().map(|&t| find_critical_points(model, t)).collect::<Result<_, _>>()?)
}
