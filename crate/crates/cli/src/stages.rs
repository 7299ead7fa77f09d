//! One function per subcommand. Each computes its quantities, writes its
//! artifacts into the output directory and returns the values that `verify`
//! checks.

use std::path::Path;

use kramers_core::capacity::{capacity, CapacityEstimate, TransitionSets};
use kramers_core::invariant::{
    assemble_pi, expand, solve_delta1_first_order, Corrections, Delta1Solution, ExpansionMethod, InvariantDensity,
    InvariantExpansion, SpectralProfile,
};
use kramers_core::jump::{delta_periodic, mean_jump_time, simulate_jump, JumpSolution, RateProfile};
use kramers_core::mc::{empirical_invariant, hitting_times, summarize, OccupationHistogram, Start};
use kramers_core::potential::{find_critical_points, validate_assumptions, ValidationReport};
use kramers_core::predictor::{
    classify_regime, ek_fast_forcing, ek_laplace_peak, ek_static, general_equilibrium_time, Barriers, EquilibriumPrediction,
    LaplacePeak, Prediction, RegimeReport,
};
use kramers_core::spectral::kramers_rates;
use kramers_core::stats::HittingStats;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{write_csv, write_json, Cell};
use crate::CliError;

fn stage<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Stage { stage: name, message: e.to_string() }
}

/// Slices used to validate the model before anything else runs.
const VALIDATION_POINTS: usize = 256;

pub fn validate_potential(cfg: &RunConfig) -> ValidationReport {
    let y: Vec<f64> = (0..VALIDATION_POINTS).map(|j| j as f64 / VALIDATION_POINTS as f64).collect();
    validate_assumptions(&cfg.model(), &y)
}

pub struct SpectralStage {
    pub profile: SpectralProfile,
    /// Kramers rates on the same slices.
    pub kramers: RateProfile,
}

impl SpectralStage {
    /// max_j |λ₁ numeric / λ₁ Kramers − 1|.
    pub fn max_relative_gap(&self) -> f64 {
        let k = self.kramers.lambda1_samples();
        (0..self.profile.y_points()).map(|j| (self.profile.lambda(j, 1) / k[j] - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn spectral(cfg: &RunConfig, out: &Path) -> Result<SpectralStage, CliError> {
    let model = cfg.model();
    let g = &cfg.grid;
    let profile = SpectralProfile::build(&model, cfg.sigma, g.y_points, g.x_points, g.n_max).map_err(stage("spectral"))?;
    let kramers = RateProfile::from_model(&model, cfg.sigma, cfg.epsilon, g.y_points).map_err(stage("spectral"))?;
    let rows = (0..profile.y_points()).map(|j| {
        let geo = &profile.geometry[j];
        let kr = kramers_rates(geo, cfg.sigma);
        vec![
            Cell::F(profile.y[j]),
            Cell::F(profile.lambda(j, 1)),
            Cell::F(kr.lambda1),
            Cell::F(kr.r_minus),
            Cell::F(kr.r_plus),
            Cell::F(if profile.n_max >= 2 { profile.lambda(j, 2) } else { f64::NAN }),
            Cell::F(profile.delta_bar[j]),
            Cell::F(kr.delta_bar),
            Cell::F(profile.a[j]),
            Cell::F(profile.b[j]),
            Cell::F(geo.x_minus),
            Cell::F(geo.x_saddle),
            Cell::F(geo.x_plus),
        ]
    });
    write_csv(
        &out.join("spectral.csv"),
        &[
            "y",
            "lambda1",
            "lambda1_kramers",
            "r_minus",
            "r_plus",
            "lambda2",
            "delta_bar",
            "delta_bar_kramers",
            "A",
            "B",
            "x_minus",
            "x_saddle",
            "x_plus",
        ],
        rows,
    )?;
    Ok(SpectralStage { profile, kramers })
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpReport {
    pub y0: f64,
    pub closed_form_mean: f64,
    pub simulated: HittingStats,
    pub mean_delta: f64,
    pub delta_residual: f64,
}

pub struct JumpStage {
    pub profile: RateProfile,
    pub solution: JumpSolution,
    pub report: JumpReport,
}

pub fn jump(cfg: &RunConfig, out: &Path) -> Result<JumpStage, CliError> {
    let profile = RateProfile::from_model(&cfg.model(), cfg.sigma, cfg.epsilon, cfg.grid.y_points).map_err(stage("jump"))?;
    let solution = delta_periodic(&profile).map_err(stage("jump"))?;
    let y0 = cfg.mc.start_y;
    let report = JumpReport {
        y0,
        closed_form_mean: mean_jump_time(&profile, y0),
        simulated: simulate_jump(&profile, y0, cfg.mc.seed, cfg.mc.jump_samples),
        mean_delta: solution.mean(),
        delta_residual: solution.residual,
    };
    let rows = profile.y_grid().into_iter().map(|y| {
        vec![
            Cell::F(y),
            Cell::F(profile.r_minus(y)),
            Cell::F(profile.r_plus(y)),
            Cell::F(profile.lambda1(y)),
            Cell::F(profile.a(y)),
            Cell::F(solution.delta_at(y)),
        ]
    });
    write_csv(&out.join("jump.csv"), &["y", "r_minus", "r_plus", "lambda1", "A", "delta"], rows)?;
    write_json(&out.join("jump.json"), &report)?;
    Ok(JumpStage { profile, solution, report })
}

pub struct InvariantStage {
    pub expansion: InvariantExpansion,
    pub first_order: Delta1Solution,
    pub density: InvariantDensity,
    pub histogram: Option<OccupationHistogram>,
}

/// Columns of pi.csv are thinned to at most this many x-nodes per slice.
const PI_CSV_X: usize = 256;

/// Y-bins of the optional occupation histogram.
pub const HISTOGRAM_Y_BINS: usize = 8;

/// Histogram x-edges: uniform over [x₋ − 1, x₊ + 1] of the whole family.
pub fn histogram_edges(density: &InvariantDensity, bins: usize) -> Vec<f64> {
    let lo = density.grid.nodes[0].max(-3.0);
    let hi = density.grid.nodes[density.grid.len() - 1].min(3.0);
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

pub fn invariant(cfg: &RunConfig, out: &Path, sp: &SpectralProfile, with_mc: bool) -> Result<InvariantStage, CliError> {
    let expansion = expand(sp, cfg.epsilon, cfg.rho, ExpansionMethod::Coupled).map_err(stage("invariant"))?;
    let first_order = solve_delta1_first_order(sp, cfg.epsilon, Corrections::ALL).map_err(stage("invariant"))?;
    let density = assemble_pi(sp, &expansion);
    let histogram = if with_mc {
        let mut sim = cfg.sim_config(Start::LeftWell { y0: cfg.mc.start_y });
        sim.n_paths = cfg.mc.invariant_chains;
        let edges = histogram_edges(&density, 48);
        Some(
            empirical_invariant(&cfg.model(), &sim, cfg.mc.invariant_burn_in, cfg.mc.invariant_time, &edges, HISTOGRAM_Y_BINS)
                .map_err(stage("invariant"))?,
        )
    } else {
        None
    };
    let p_minus = density.p_minus();
    let ny = sp.y_points();
    let rows = (0..ny).map(|j| {
        let mc = histogram.as_ref().map_or(Cell::Empty, |h| {
            let b = ((sp.y[j] * h.y_bins as f64) as usize).min(h.y_bins - 1);
            Cell::F(h.left_of_saddle[b])
        });
        vec![
            Cell::F(sp.y[j]),
            Cell::F(expansion.delta1[j]),
            Cell::F(first_order.at(sp.y[j])),
            Cell::F(expansion.alpha1()[j]),
            Cell::F(p_minus[j]),
            Cell::F(0.5 * (1.0 - expansion.delta1[j])),
            mc,
        ]
    });
    write_csv(
        &out.join("invariant.csv"),
        &["y", "delta1", "delta1_first_order", "alpha1", "p_minus_theory", "p_minus_two_state", "p_minus_mc"],
        rows,
    )?;
    let stride = density.grid.len().div_ceil(PI_CSV_X);
    let cells = (0..ny).flat_map(|j| {
        let d = &density;
        (0..d.grid.len()).step_by(stride).map(move |i| vec![Cell::F(d.grid.nodes[i]), Cell::F(d.y[j]), Cell::F(d.values[j][i])])
    });
    write_csv(&out.join("pi.csv"), &["x", "y", "density"], cells)?;
    Ok(InvariantStage { expansion, first_order, density, histogram })
}

pub fn capacity_stage(
    cfg: &RunConfig,
    out: &Path,
    sp: &SpectralProfile,
    exp: &InvariantExpansion,
) -> Result<CapacityEstimate, CliError> {
    let sets = TransitionSets::new(cfg.rho_hat).map_err(stage("capacity"))?;
    let est = capacity(&cfg.model(), sp, exp, &sets).map_err(stage("capacity"))?;
    write_json(&out.join("capacity.json"), &est)?;
    Ok(est)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub start_y: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub rho: f64,
    pub dt: f64,
    pub seed: u64,
    pub paths: usize,
    pub max_time: f64,
    /// Times are on the rescaled clock; divide by ε for the unscaled one.
    pub stats: HittingStats,
    pub unscaled_mean: f64,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateReport, CliError> {
    let sim = cfg.sim_config(Start::BoundaryA { y0: cfg.mc.start_y });
    let times = hitting_times(&cfg.model(), &sim).map_err(stage("simulate"))?;
    let stats = summarize(&times);
    let rows = times.iter().enumerate().map(|(i, t)| vec![Cell::I(i as u64), t.map_or(Cell::Empty, Cell::F)]);
    write_csv(&out.join("tau.csv"), &["path", "tau"], rows)?;
    let report = SimulateReport {
        start_y: cfg.mc.start_y,
        epsilon: cfg.epsilon,
        sigma: cfg.sigma,
        rho: cfg.rho,
        dt: sim.dt,
        seed: sim.seed,
        paths: sim.n_paths,
        max_time: sim.max_time,
        unscaled_mean: stats.mean / cfg.epsilon,
        stats,
    };
    write_json(&out.join("simulate.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictReport {
    pub barriers: Barriers,
    pub regime: RegimeReport,
    /// Frozen-slice law at the starting slice, on the rescaled clock (×ε).
    pub static_ek_at_start: f64,
    pub fast_forcing: Prediction,
    pub laplace_peak: Option<LaplacePeak>,
    pub general_equilibrium: EquilibriumPrediction,
}

pub fn predict(cfg: &RunConfig, out: &Path) -> Result<PredictReport, CliError> {
    let model = cfg.model();
    let barriers = Barriers::from_model(&model, VALIDATION_POINTS).map_err(stage("predict"))?;
    let profile = RateProfile::from_model(&model, cfg.sigma, cfg.epsilon, cfg.grid.y_points).map_err(stage("predict"))?;
    let delta = delta_periodic(&profile).map_err(stage("predict"))?;
    let start = find_critical_points(&model, cfg.mc.start_y).map_err(stage("predict"))?;
    let report = PredictReport {
        barriers,
        regime: classify_regime(&profile, &barriers, cfg.epsilon, cfg.sigma),
        static_ek_at_start: cfg.epsilon * ek_static(&start, cfg.sigma),
        fast_forcing: ek_fast_forcing(&profile, &barriers, cfg.sigma),
        laplace_peak: ek_laplace_peak(&model, cfg.sigma, cfg.epsilon).ok(),
        general_equilibrium: general_equilibrium_time(&profile, &barriers, cfg.sigma, |y| delta.delta_at(y)),
    };
    write_json(&out.join("predict.json"), &report)?;
    Ok(report)
}
