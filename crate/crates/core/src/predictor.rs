//! Closed-form mean transition times and regime classification.
//!
//! All times are on the rescaled clock, in which y advances at unit speed.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::capacity::{ell, reference_c0};
use crate::jump::RateProfile;
use crate::potential::{find_critical_points, Potential, PotentialError, WellGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("h₋ has no isolated interior minimum (curvature {curvature:e} at y = {y})")]
    NoInteriorPeak { y: f64, curvature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    StaticEk,
    FastForcing,
    GeneralEquilibrium,
    LaplacePeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    SuperAdiabatic,
    Intermediate,
    FastForcingStrong,
    FastForcingWeak,
}

/// Extremes of the barrier heights over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barriers {
    pub h_minus_min: f64,
    pub h_minus_max: f64,
    pub h_plus_min: f64,
    pub h_plus_max: f64,
}

impl Barriers {
    pub fn from_model<P: Potential + ?Sized>(model: &P, y_points: usize) -> Result<Self, PotentialError> {
        let geo =
            (0..y_points).map(|j| find_critical_points(model, j as f64 / y_points as f64)).collect::<Result<Vec<_>, _>>()?;
        let fold = |f: fn(&WellGeometry) -> f64| {
            geo.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (h_minus_min, h_minus_max) = fold(|g| g.h_minus);
        let (h_plus_min, h_plus_max) = fold(|g| g.h_plus);
        Ok(Barriers { h_minus_min, h_minus_max, h_plus_min, h_plus_max })
    }

    pub fn h_min(&self) -> f64 {
        self.h_minus_min.min(self.h_plus_min)
    }

    pub fn h_max(&self) -> f64 {
        self.h_minus_max.max(self.h_plus_max)
    }

    /// H = |h₋ᵐⁱⁿ − h₊ᵐⁱⁿ|.
    pub fn asymmetry(&self) -> f64 {
        (self.h_minus_min - self.h_plus_min).abs()
    }

    /// H₋ = (h₋ᵐⁱⁿ − h₊ᵐⁱⁿ)₊.
    pub fn asymmetry_minus(&self) -> f64 {
        (self.h_minus_min - self.h_plus_min).max(0.0)
    }

    /// ½h₋ᵐⁱⁿ < h₊ᵐⁱⁿ < 2h₋ᵐⁱⁿ.
    pub fn moderately_asymmetric(&self) -> bool {
        0.5 * self.h_minus_min < self.h_plus_min && self.h_plus_min < 2.0 * self.h_minus_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub exp_h_max: f64,
    pub exp_h_min: f64,
    pub sigma_sq: f64,
    pub mean_lambda1_quarter: f64,
    pub min_lambda1: f64,
    pub mean_lambda1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub thresholds: Thresholds,
    /// ε/⟨λ₁⟩; "≫ 1" means fast forcing.
    pub forcing_slack: f64,
    /// min λ₁/ε; "≫ 1" means super-adiabatic.
    pub adiabatic_slack: f64,
    /// σ²/ε; above 1 is the strong-noise side.
    pub noise_slack: f64,
    /// Some separation that defines the label is less than a factor 10.
    pub low_confidence: bool,
}

/// Labels use the rate thresholds min λ₁ and ⟨λ₁⟩ rather than bare
/// Arrhenius factors, so that prefactors are included; each slack factor is
/// reported so a reader can see how far from a boundary the point sits.
pub fn classify_regime(profile: &RateProfile, barriers: &Barriers, epsilon: f64, sigma: f64) -> RegimeReport {
    let s2 = sigma * sigma;
    let mean_l = profile.mean_lambda1();
    let min_l = profile.min_lambda1();
    let thresholds = Thresholds {
        exp_h_max: (-2.0 * barriers.h_max() / s2).exp(),
        exp_h_min: (-2.0 * barriers.h_min() / s2).exp(),
        sigma_sq: s2,
        mean_lambda1_quarter: mean_l.powf(0.25),
        min_lambda1: min_l,
        mean_lambda1: mean_l,
    };
    let forcing_slack = epsilon / mean_l;
    let adiabatic_slack = min_l / epsilon;
    let noise_slack = s2 / epsilon;
    let regime = if epsilon < min_l {
        Regime::SuperAdiabatic
    } else if epsilon > mean_l {
        if epsilon < s2 {
            Regime::FastForcingStrong
        } else {
            Regime::FastForcingWeak
        }
    } else {
        Regime::Intermediate
    };
    let low_confidence = match regime {
        Regime::SuperAdiabatic => adiabatic_slack < 10.0,
        Regime::Intermediate => true,
        Regime::FastForcingStrong => forcing_slack < 10.0 || noise_slack < 10.0,
        Regime::FastForcingWeak => forcing_slack < 10.0 || noise_slack > 0.1,
    };
    RegimeReport { regime, thresholds, forcing_slack, adiabatic_slack, noise_slack, low_confidence }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    pub law: Law,
    pub regime: Regime,
    /// Error expression evaluated with unit constants.
    pub error_envelope: f64,
    /// ε lies in the window where the law is claimed.
    pub validity: bool,
    pub low_confidence: bool,
}

/// 2π/(ω₀ω₋)·e^{2h₋/σ²}, the frozen-slice mean escape time.
pub fn ek_static(geometry: &WellGeometry, sigma: f64) -> f64 {
    2.0 * PI / (geometry.omega0 * geometry.omega_minus) * (2.0 * geometry.h_minus / (sigma * sigma)).exp()
}

/// R₁ with unit constants and ℓ(σ) = |ln σ|.
pub fn r1_envelope(mean_lambda1: f64, barriers: &Barriers, epsilon: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let l = ell(sigma);
    let big_h = (2.0 * barriers.asymmetry() / s2).exp();
    let big_h_minus = (2.0 * barriers.asymmetry_minus() / s2).exp();
    s2 + (epsilon * l.powi(3) / s2
        + epsilon * epsilon * l / (sigma.powf(3.5) * mean_lambda1.sqrt())
        + mean_lambda1 * mean_lambda1 / epsilon)
        * big_h
        + mean_lambda1 / epsilon * (1.0 + big_h_minus)
}

/// ε/⟨r₋⟩ with validity window ⟨λ₁⟩ < ε < ⟨λ₁⟩^{1/4} and moderate asymmetry.
pub fn ek_fast_forcing(profile: &RateProfile, barriers: &Barriers, sigma: f64) -> Prediction {
    let eps = profile.epsilon;
    let mean_l = profile.mean_lambda1();
    let regime = classify_regime(profile, barriers, eps, sigma);
    Prediction {
        value: eps / profile.mean_r_minus(),
        law: Law::FastForcing,
        regime: regime.regime,
        error_envelope: r1_envelope(mean_l, barriers, eps, sigma),
        validity: mean_l < eps && eps < mean_l.powf(0.25) && barriers.moderately_asymmetric(),
        low_confidence: regime.low_confidence,
    }
}

/// ∂_y h₋ and ∂²_y h₋ from the envelope theorem: critical points move with
/// x′ = −∂ₓᵧV/∂ₓₓV.
fn h_minus_derivatives<P: Potential + ?Sized>(model: &P, y: f64) -> Result<(f64, f64, WellGeometry), PotentialError> {
    let g = find_critical_points(model, y)?;
    let d1 = model.dy(g.x_saddle, y) - model.dy(g.x_minus, y);
    let curv = |x: f64| model.dyy(x, y) - model.dxy(x, y).powi(2) / model.dxx(x, y);
    Ok((d1, curv(g.x_saddle) - curv(g.x_minus), g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePeak {
    /// ε times the peak-dominated mean escape time.
    pub value: f64,
    pub y_star: f64,
    pub h_minus: f64,
    pub curvature: f64,
    /// √(h₋″)/(σ√π), the factor relative to the frozen law at y*.
    pub extra_factor: f64,
}

/// Laplace evaluation of ε/⟨r₋⟩ around the slice where h₋ is lowest, so
/// escapes concentrate there.
pub fn ek_laplace_peak<P: Potential + ?Sized>(model: &P, sigma: f64, epsilon: f64) -> Result<LaplacePeak, PredictorError> {
    const SCAN: usize = 128;
    let h = |y: f64| find_critical_points(model, y).map(|g| g.h_minus);
    let samples = (0..SCAN).map(|j| h(j as f64 / SCAN as f64)).collect::<Result<Vec<_>, _>>()?;
    let (j0, _) = samples.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let spread = samples.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - samples[j0];
    if spread < 1e-12 {
        return Err(PredictorError::NoInteriorPeak { y: j0 as f64 / SCAN as f64, curvature: 0.0 });
    }

    // Golden section on the bracketing cells.
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = ((j0 as f64 - 1.0) / SCAN as f64, (j0 as f64 + 1.0) / SCAN as f64);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (h(c.rem_euclid(1.0))?, h(d.rem_euclid(1.0))?);
    for _ in 0..30 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = h(c.rem_euclid(1.0))?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = h(d.rem_euclid(1.0))?;
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..8 {
        let (d1, d2, _) = h_minus_derivatives(model, y.rem_euclid(1.0))?;
        if !(d2 > 0.0) {
            break;
        }
        let step = d1 / d2;
        y -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    let y = y.rem_euclid(1.0);
    let (_, d2, g) = h_minus_derivatives(model, y)?;
    if !(d2 > 0.0) {
        return Err(PredictorError::NoInteriorPeak { y, curvature: d2 });
    }
    let extra_factor = d2.sqrt() / (sigma * PI.sqrt());
    Ok(LaplacePeak {
        value: epsilon * ek_static(&g, sigma) * extra_factor,
        y_star: y,
        h_minus: g.h_minus,
        curvature: d2,
        extra_factor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPrediction {
    pub prediction: Prediction,
    pub y: Vec<f64>,
    /// Leading-order density of ν_AB over y on ∂A.
    pub nu_ab: Vec<f64>,
}

/// R₀ with unit constants.
pub fn r0_envelope(profile: &RateProfile, mean_delta1: f64, mean_l_aw: f64, sigma: f64) -> f64 {
    let eps = profile.epsilon;
    let s2 = sigma * sigma;
    let l = ell(sigma);
    let sqrt_mean = {
        let s: Vec<f64> = profile.lambda1_samples().iter().map(|v| v.sqrt()).collect();
        s.iter().sum::<f64>() / s.len() as f64
    };
    s2 + eps * l * sqrt_mean / (s2 * (1.0 - mean_delta1))
        + eps * l * l * profile.mean_lambda1() / (s2 * mean_l_aw)
        + eps * eps * l * sqrt_mean / (sigma.powf(3.5) * mean_l_aw)
}

/// 2ε(1 − ⟨δ₁⟩)/⟨λ₁(1 − Aδ₁)⟩, the mean of τ_B started from ν_AB.
pub fn general_equilibrium_time<F: Fn(f64) -> f64>(
    profile: &RateProfile,
    barriers: &Barriers,
    sigma: f64,
    delta1: F,
) -> EquilibriumPrediction {
    const N: usize = 4096;
    let eps = profile.epsilon;
    let mean_delta1 = (0..N).map(|k| delta1((k as f64 + 0.5) / N as f64)).sum::<f64>() / N as f64;
    let mean_l_aw = 4.0 * eps * reference_c0(profile, &delta1);
    let regime = classify_regime(profile, barriers, eps, sigma);
    let y = profile.y_grid();
    let nu_ab = y.iter().map(|&t| profile.lambda1(t) * (1.0 + profile.a(t)) * (1.0 - delta1(t)) / mean_l_aw).collect();
    EquilibriumPrediction {
        prediction: Prediction {
            value: 2.0 * eps * (1.0 - mean_delta1) / mean_l_aw,
            law: Law::GeneralEquilibrium,
            regime: regime.regime,
            error_envelope: r0_envelope(profile, mean_delta1, mean_l_aw, sigma),
            validity: true,
            low_confidence: regime.regime == Regime::Intermediate,
        },
        y,
        nu_ab,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::delta_periodic;
    use crate::potential::make_tilted_quartic;

    #[test]
    fn static_ek_symmetric_quartic() {
        let m = make_tilted_quartic(1.0, 0.0, 0.0);
        let g = find_critical_points(&m, 0.0).unwrap();
        let expect = 2f64.sqrt() * PI * (0.5f64 / 0.2025).exp();
        assert!((ek_static(&g, 0.45) / expect - 1.0).abs() < 1e-12);
        assert!((expect - 52.48).abs() < 0.01);
    }

    #[test]
    fn fast_forcing_reduces_to_static_without_forcing() {
        let m = make_tilted_quartic(1.0, 0.0, 0.0);
        let b = Barriers::from_model(&m, 32).unwrap();
        let p = RateProfile::from_model(&m, 0.45, 0.2, 32).unwrap();
        let g = find_critical_points(&m, 0.0).unwrap();
        let ff = ek_fast_forcing(&p, &b, 0.45);
        assert!((ff.value / (0.2 * ek_static(&g, 0.45)) - 1.0).abs() < 1e-12);
        assert!(matches!(ek_laplace_peak(&m, 0.45, 0.2), Err(PredictorError::NoInteriorPeak { .. })));
    }

    #[test]
    fn default_point_is_fast_forcing_strong() {
        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let b = Barriers::from_model(&m, 64).unwrap();
        let p = RateProfile::from_model(&m, 0.45, 0.2, 64).unwrap();
        let r = classify_regime(&p, &b, 0.2, 0.45);
        assert_eq!(r.regime, Regime::FastForcingStrong);
        assert!(r.forcing_slack > 1.0 && r.noise_slack > 1.0);
        assert_eq!(classify_regime(&p, &b, 1e-9, 0.45).regime, Regime::SuperAdiabatic);
        assert_eq!(classify_regime(&p, &b, 10.0 * 0.2025, 0.45).regime, Regime::FastForcingWeak);
    }

    #[test]
    fn thresholds_grow_with_sigma() {
        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let b = Barriers::from_model(&m, 64).unwrap();
        let at = |s: f64| classify_regime(&RateProfile::from_model(&m, s, 0.2, 64).unwrap(), &b, 0.2, s).thresholds;
        let (lo, hi) = (at(0.35), at(0.45));
        assert!(lo.exp_h_max < hi.exp_h_max && lo.exp_h_min < hi.exp_h_min);
        assert!(lo.mean_lambda1 < hi.mean_lambda1);
    }

    #[test]
    fn laplace_peak_approaches_fast_forcing() {
        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let b = Barriers::from_model(&m, 64).unwrap();
        let gaps: Vec<f64> = [0.45, 0.35, 0.3, 0.2]
            .iter()
            .map(|&s| {
                let p = RateProfile::from_model(&m, s, 0.2, 256).unwrap();
                let ff = ek_fast_forcing(&p, &b, s).value;
                let lp = ek_laplace_peak(&m, s, 0.2).unwrap();
                assert!((lp.extra_factor - lp.curvature.sqrt() / (s * PI.sqrt())).abs() < 1e-15);
                (ff / lp.value - 1.0).abs()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn laplace_peak_is_translation_invariant() {
        let a = ek_laplace_peak(&make_tilted_quartic(1.0, 0.1, 0.0), 0.4, 0.2).unwrap();
        let b = ek_laplace_peak(&make_tilted_quartic(1.0, 0.1, 0.3), 0.4, 0.2).unwrap();
        assert!((a.value / b.value - 1.0).abs() < 1e-9);
        assert!(
            ((a.y_star - b.y_star).rem_euclid(1.0) - 0.3).abs() < 1e-7
                || ((b.y_star - a.y_star).rem_euclid(1.0) - 0.3).abs() < 1e-7
        );
    }

    #[test]
    fn equilibrium_time_identities() {
        let m = make_tilted_quartic(1.0, 0.0, 0.0);
        let b = Barriers::from_model(&m, 32).unwrap();
        let p = RateProfile::from_model(&m, 0.45, 0.2, 32).unwrap();
        let ge = general_equilibrium_time(&p, &b, 0.45, |_| 0.0);
        let ff = ek_fast_forcing(&p, &b, 0.45);
        assert!((ge.prediction.value / ff.value - 1.0).abs() < 1e-10);
        let mass: f64 = ge.nu_ab.iter().sum::<f64>() / ge.nu_ab.len() as f64;
        assert!((mass - 1.0).abs() < 1e-10);

        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let p = RateProfile::from_model(&m, 0.45, 0.2, 64).unwrap();
        let sol = delta_periodic(&p).unwrap();
        let ge = general_equilibrium_time(&p, &b, 0.45, |y| sol.delta_at(y));
        let ff = ek_fast_forcing(&p, &b, 0.45);
        assert!((ge.prediction.value / ff.value - 1.0).abs() < 0.1);
    }
}
