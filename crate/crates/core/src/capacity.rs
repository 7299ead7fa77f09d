//! Upper and lower bounds on the capacity between the well neighbourhoods
//! A = {x ≤ a(y)} and B = {x ≥ b(y)}, from the Dirichlet functional of the
//! static committor and the Thomson functional of an x-directed test flow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invariant::{InvariantError, InvariantExpansion, SpectralProfile};
use crate::jump::RateProfile;
use crate::numerics::quad::gl8;
use crate::numerics::{kahan_sum, PeriodicSpline};
use crate::potential::{find_critical_points, Potential, WellGeometry};
use crate::spectral::XGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error("rho_hat must be positive, got {0}")]
    BadRhoHat(f64),
    #[error("at y = {y} the set boundaries a = {a}, b = {b} do not enclose the saddle {saddle}")]
    SetsOverlap { y: f64, a: f64, saddle: f64, b: f64 },
    #[error("expansion factor Φ is not positive at (x, y) = ({x}, {y}): {value:e}")]
    NegativeDensity { x: f64, y: f64, value: f64 },
}

/// Default offset of the set boundaries from the well bottoms.
pub const DEFAULT_RHO_HAT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSets {
    pub rho_hat: f64,
}

impl TransitionSets {
    pub fn new(rho_hat: f64) -> Result<Self, CapacityError> {
        if !(rho_hat > 0.0) {
            return Err(CapacityError::BadRhoHat(rho_hat));
        }
        Ok(TransitionSets { rho_hat })
    }

    pub fn a(&self, g: &WellGeometry) -> f64 {
        g.x_minus + self.rho_hat
    }

    pub fn b(&self, g: &WellGeometry) -> f64 {
        g.x_plus - self.rho_hat
    }

    pub fn check(&self, g: &WellGeometry) -> Result<(), CapacityError> {
        let (a, b) = (self.a(g), self.b(g));
        if a < g.x_saddle && g.x_saddle < b {
            Ok(())
        } else {
            Err(CapacityError::SetsOverlap { y: g.y, a, saddle: g.x_saddle, b })
        }
    }
}

impl Default for TransitionSets {
    fn default() -> Self {
        TransitionSets { rho_hat: DEFAULT_RHO_HAT }
    }
}

/// C₀ = (1/4ε)⟨λ₁(1 − Aδ₁)⟩.
pub fn reference_c0<F: Fn(f64) -> f64>(profile: &RateProfile, delta1: F) -> f64 {
    const N: usize = 4096;
    let mean = kahan_sum((0..N).map(|k| {
        let y = (k as f64 + 0.5) / N as f64;
        profile.lambda1(y) * (1.0 - profile.a(y) * delta1(y))
    })) / N as f64;
    mean / (4.0 * profile.epsilon)
}

/// ∫_{max(x_i, lo)}^{hi} f at every node, plus the total over [lo, hi].
fn tail_integrals<F: Fn(f64) -> f64>(nodes: &[f64], lo: f64, hi: f64, f: F) -> (Vec<f64>, f64) {
    let n = nodes.len();
    let mut tail = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        if i + 1 < n {
            let (p, q) = (nodes[i].max(lo), nodes[i + 1].min(hi));
            if q > p {
                acc += gl8(&f, p, q);
            }
        }
        tail[i] = acc;
    }
    // Part of [lo, hi] left of the first node.
    let head = if lo < nodes[0] { gl8(&f, lo, nodes[0].min(hi)) } else { 0.0 };
    (tail, acc + head)
}

/// ∫_{lo}^{hi} f split at the grid nodes.
fn cell_integral<F: Fn(f64) -> f64>(nodes: &[f64], lo: f64, hi: f64, f: F) -> f64 {
    tail_integrals(nodes, lo, hi, f).1
}

/// h̃₀ and h̃₀* on the grid nodes of one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeCommittors {
    pub y: f64,
    pub a: f64,
    pub b: f64,
    pub h: Vec<f64>,
    pub h_star: Vec<f64>,
}

fn committor_from_tail(nodes: &[f64], a: f64, b: f64, tail: &[f64], total: f64) -> Vec<f64> {
    nodes
        .iter()
        .zip(tail)
        .map(|(&x, t)| {
            if x <= a {
                1.0
            } else if x >= b {
                0.0
            } else {
                t / total
            }
        })
        .collect()
}

/// h̃₀ by quadrature of e^{2V₀/σ²} on (a, b); h̃₀* with the extra weight 1/Φ².
/// `phi` holds Φ at the grid nodes and must be positive on [a, b].
pub fn tilde_committors<P: Potential + ?Sized>(
    sets: &TransitionSets,
    model: &P,
    geometry: &WellGeometry,
    sigma: f64,
    grid: &XGrid,
    phi: &[f64],
) -> Result<TildeCommittors, CapacityError> {
    sets.check(geometry)?;
    let (a, b) = (sets.a(geometry), sets.b(geometry));
    let y = geometry.y;
    for (&x, &p) in grid.nodes.iter().zip(phi) {
        if x >= a && x <= b && !(p > 0.0) {
            return Err(CapacityError::NegativeDensity { x, y, value: p });
        }
    }
    let s2 = sigma * sigma;
    let vs = geometry.v_saddle;
    let w = |x: f64| (2.0 * (model.v(x, y) - vs) / s2).exp();
    let (tail, total) = tail_integrals(&grid.nodes, a, b, w);
    let h = committor_from_tail(&grid.nodes, a, b, &tail, total);
    let (tail, total) = tail_integrals(&grid.nodes, a, b, |x| w(x) / grid.interpolate(phi, x).powi(2));
    let h_star = committor_from_tail(&grid.nodes, a, b, &tail, total);
    Ok(TildeCommittors { y, a, b, h, h_star })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub c0: f64,
    pub dirichlet_upper: f64,
    pub thomson_lower: f64,
    /// |−2∫(∇·φ)h̃₀| for the Dirichlet test pair.
    pub defect_upper: f64,
    /// |(1 + d)² − 1|/D(−φ), the shift the Thomson correction factor would apply.
    pub defect_lower: f64,
    /// d = ∫(∇·φ)h̃₀ for the Thomson test flow.
    pub thomson_divergence: f64,
    /// Effective constants that make the leading-order error envelopes exact.
    pub m_plus_fit: f64,
    pub m_minus_fit: f64,
    pub rho_hat: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub rho: f64,
}

impl CapacityEstimate {
    /// Lower bound minus its defect does not exceed the upper bound plus its defect.
    pub fn brackets(&self) -> bool {
        self.thomson_lower - self.defect_lower <= self.dirichlet_upper + self.defect_upper
    }
}

struct SliceTerms {
    /// ⟨π, (∂ₓh̃₀)²⟩
    dx2: f64,
    /// ⟨π, (∂_yh̃₀)²⟩
    dy2: f64,
    /// ∫(−2∇·φ)h̃₀ dx
    div_upper: f64,
    /// λ₁B²Φ(a)
    flux: f64,
    /// λ₁B²⟨∂ₓΦ, h̃₀⟩
    div_lower: f64,
    /// λ₁²B⁴∫Φ²/π dx
    energy: f64,
}

/// Φ = 1 + Σ cₘφₘ at the grid nodes; `coeffs[0]` is ignored.
fn phi_on_slice(coeffs: &[f64], phi_modes: &[Vec<f64>]) -> Vec<f64> {
    (0..phi_modes[0].len()).map(|i| 1.0 + (1..coeffs.len()).map(|m| coeffs[m] * phi_modes[m][i]).sum::<f64>()).collect()
}

fn slice_terms<P: Potential + ?Sized>(
    model: &P,
    sp: &SpectralProfile,
    exp: &InvariantExpansion,
    sets: &TransitionSets,
    j: usize,
) -> Result<SliceTerms, CapacityError> {
    let st = &sp.stencils[j];
    let g = &sp.geometry[j];
    let grid = &sp.grid;
    let x = &grid.nodes;
    let sigma = sp.sigma;
    let s2 = sigma * sigma;
    let rho2 = exp.rho * exp.rho;
    let y = sp.y[j];
    let dy = st.dy;

    let splines: Vec<PeriodicSpline> = exp.alpha.iter().map(|a| PeriodicSpline::new(a)).collect();
    let at = |t: f64| -> Vec<f64> { splines.iter().map(|s| s.eval(t)).collect() };
    let centre: Vec<f64> = exp.alpha.iter().map(|a| a[j]).collect();
    let phi_c = phi_on_slice(&centre, &st.center.phi);
    let phi_m = phi_on_slice(&at(y - dy), &st.minus.phi);
    let phi_p = phi_on_slice(&at(y + dy), &st.plus.phi);

    let gm = find_critical_points(model, y - dy).map_err(InvariantError::from)?;
    let gp = find_critical_points(model, y + dy).map_err(InvariantError::from)?;
    let tc = tilde_committors(sets, model, g, sigma, grid, &phi_c)?;
    let tm = tilde_committors(sets, model, &gm, sigma, grid, &phi_m)?;
    let tp = tilde_committors(sets, model, &gp, sigma, grid, &phi_p)?;
    let (a, b) = (tc.a, tc.b);

    // π₀ normalised on the grid, as in the eigen-solver.
    let vmin = g.v_min();
    let z: f64 = grid.integrate(&x.iter().map(|&t| (-2.0 * (model.v(t, y) - vmin) / s2).exp()).collect::<Vec<_>>());
    let vs = g.v_saddle;
    let wv = |t: f64| (2.0 * (model.v(t, y) - vs) / s2).exp();
    let n_tilde = cell_integral(x, a, b, wv);
    let phi_at = |t: f64| grid.interpolate(&phi_c, t);

    // π(∂ₓh̃₀)² = Φ e^{2(V−Vs)/σ²} e^{2(vmin−Vs)/σ²} / (Z Ñ²) in shifted units.
    let lift = (2.0 * (vmin - vs) / s2).exp();
    let dx2 = lift / (z * n_tilde * n_tilde) * cell_integral(x, a, b, |t| phi_at(t) * wv(t));

    let pi_c: Vec<f64> = st.center.pi0.iter().zip(&phi_c).map(|(p, f)| p * f).collect();
    let pi_m: Vec<f64> = st.minus.pi0.iter().zip(&phi_m).map(|(p, f)| p * f).collect();
    let pi_p: Vec<f64> = st.plus.pi0.iter().zip(&phi_p).map(|(p, f)| p * f).collect();

    let mut dy2 = vec![0.0; x.len()];
    let mut div = vec![0.0; x.len()];
    for i in 0..x.len() {
        if x[i] <= a || x[i] >= b {
            continue;
        }
        let hy = (tp.h[i] - tm.h[i]) / (2.0 * dy);
        let hyy = (tp.h[i] - 2.0 * tc.h[i] + tm.h[i]) / (dy * dy);
        let sy = (tp.h_star[i] - tm.h_star[i]) / (2.0 * dy);
        let syy = (tp.h_star[i] - 2.0 * tc.h_star[i] + tm.h_star[i]) / (dy * dy);
        let log_pi_y = if pi_p[i] > 0.0 && pi_m[i] > 0.0 { (pi_p[i].ln() - pi_m[i].ln()) / (2.0 * dy) } else { 0.0 };
        let first = hy + 0.5 * rho2 * s2 * hyy;
        let second = -sy + 0.5 * rho2 * s2 * syy + rho2 * s2 * log_pi_y * sy;
        dy2[i] = pi_c[i] * hy * hy;
        div[i] = pi_c[i] * (first - second) * tc.h[i];
    }

    let lb2 = sp.lambda(j, 1) * sp.b[j] * sp.b[j];
    let phi_a = phi_at(a);
    // ⟨∂ₓΦ, h̃₀⟩ = −Φ(a) + ∫Φμ with μ = e^{2V/σ²}/Ñ.
    let phi_mu = cell_integral(x, a, b, |t| phi_at(t) * wv(t)) / n_tilde;
    // ∫Φ²/π = ∫Φ/π₀ = Z e^{2(Vs−vmin)/σ²} ∫Φ e^{2(V−Vs)/σ²}.
    let inv_pi0 = z / lift * cell_integral(x, a, b, |t| phi_at(t) * wv(t));

    Ok(SliceTerms {
        dx2,
        dy2: grid.integrate(&dy2),
        div_upper: grid.integrate(&div),
        flux: lb2 * phi_a,
        div_lower: lb2 * (phi_mu - phi_a),
        energy: lb2 * lb2 * inv_pi0,
    })
}

/// ℓ(σ) = |ln σ|.
pub fn ell(sigma: f64) -> f64 {
    sigma.ln().abs()
}

/// Both bounds, their defects and the reference value.
pub fn capacity<P: Potential + Sync + ?Sized>(
    model: &P,
    sp: &SpectralProfile,
    exp: &InvariantExpansion,
    sets: &TransitionSets,
) -> Result<CapacityEstimate, CapacityError> {
    let eps = exp.epsilon;
    let sigma = sp.sigma;
    let s2 = sigma * sigma;
    let ny = sp.y_points();
    let terms: Vec<SliceTerms> =
        (0..ny).into_par_iter().map(|j| slice_terms(model, sp, exp, sets, j)).collect::<Result<_, _>>()?;
    let mean = |f: &dyn Fn(&SliceTerms) -> f64| kahan_sum(terms.iter().map(f)) / ny as f64;

    let rho2 = exp.rho * exp.rho;
    let dirichlet_upper = s2 / (2.0 * eps) * mean(&|t| t.dx2 + eps * rho2 * t.dy2);
    let defect_upper = mean(&|t| t.div_upper).abs();

    let four_eps_c = mean(&|t| t.flux);
    let energy = 2.0 * eps / s2 * mean(&|t| t.energy) / (four_eps_c * four_eps_c);
    let thomson_lower = 1.0 / energy;
    let d = mean(&|t| t.div_lower) / four_eps_c;
    let defect_lower = ((1.0 + d).powi(2) - 1.0).abs() * thomson_lower;

    let rp = sp.rate_profile(eps).map_err(CapacityError::from)?;
    let c0 = reference_c0(&rp, |y| exp.delta1_at(y));

    let l = ell(sigma);
    let mean_l1 = rp.mean_lambda1();
    let mean_sqrt = kahan_sum(sp.lambda1().iter().map(|v| v.sqrt())) / ny as f64;
    let env_plus = eps * l / s2 * mean_l1 + eps * eps * l.sqrt() / (s2 * s2) * mean_sqrt;
    let env_minus = eps * l * l / s2 * mean_l1 + eps * eps / sigma.powf(3.5) * mean_sqrt;

    Ok(CapacityEstimate {
        c0,
        dirichlet_upper,
        thomson_lower,
        defect_upper,
        defect_lower,
        thomson_divergence: d,
        m_plus_fit: 4.0 * eps * (dirichlet_upper - c0) / env_plus,
        m_minus_fit: 4.0 * eps * (c0 - thomson_lower) / env_minus,
        rho_hat: sets.rho_hat,
        sigma,
        epsilon: eps,
        rho: exp.rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::{expand, ExpansionMethod};
    use crate::potential::make_tilted_quartic;

    #[test]
    fn tilde_committor_boundary_values_and_symmetry() {
        let model = make_tilted_quartic(1.0, 0.0, 0.0);
        let g = find_critical_points(&model, 0.0).unwrap();
        let nodes: Vec<f64> = (0..=400).map(|k| -2.0 + 0.01 * k as f64).collect();
        let grid = XGrid::from_nodes(nodes);
        let phi = vec![1.0; grid.len()];
        let t = tilde_committors(&TransitionSets::default(), &model, &g, 0.4, &grid, &phi).unwrap();
        let at = |x: f64| grid.interpolate(&t.h, x);
        assert!((at(0.0) - 0.5).abs() < 1e-12);
        assert_eq!(t.h, t.h_star);
        assert!((at(t.a) - 1.0).abs() < 1e-12 && at(t.b).abs() < 1e-12);
    }

    #[test]
    fn zero_tilt_bounds_sit_near_c0() {
        let model = make_tilted_quartic(1.0, 0.0, 0.0);
        let sigma = 0.4;
        let sp = SpectralProfile::build(&model, sigma, 16, 1024, 4).unwrap();
        let exp = expand(&sp, 0.2, 0.0, ExpansionMethod::Coupled).unwrap();
        let c = capacity(&model, &sp, &exp, &TransitionSets::default()).unwrap();
        // Φ ≡ 1 and constant slices: both functionals reduce to σ²/(2εZÑ).
        assert!((c.thomson_lower / c.dirichlet_upper - 1.0).abs() < 1e-10);
        // The ratio to C₀ is the inverse of Z·Ñ·λ₁/(2σ²), which is 1 + O(σ²).
        let up = c.dirichlet_upper / c.c0;
        assert!((up - 1.0).abs() < sigma * sigma, "{up}");
        assert!(c.defect_upper < 1e-12 && c.thomson_divergence.abs() < 1e-12);
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let g = find_critical_points(&make_tilted_quartic(1.0, 0.0, 0.0), 0.0).unwrap();
        assert!(TransitionSets::new(1.2).unwrap().check(&g).is_err());
        assert!(TransitionSets::new(0.0).is_err());
    }
}
