//! Euler–Maruyama simulation of the fast-slow system
//!
//!   dx = b(x, y)/ε dt + σ/√ε dWˣ,   dy = dt + σρ dWʸ
//!
//! with first-hitting times of B = {x ≥ b(y)}, empirical committors and
//! occupation histograms. Time is the rescaled clock; multiply by 1/ε for the
//! unscaled one. Every path draws from its own ChaCha stream keyed by
//! (seed, path index), so results do not depend on the worker count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::TransitionSets;
use crate::numerics::PeriodicSpline;
use crate::potential::{find_critical_points, Potential, PotentialError};
use crate::rng::substream;
use crate::stats::HittingStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error("path {path} left |x| <= {bound} at t = {t} (x = {x}); dt is too large")]
    Blowup { path: u64, t: f64, x: f64, bound: f64 },
    #[error("{censored} of {total} paths reached max_time without hitting")]
    ExcessCensoring { censored: usize, total: usize, stats: Box<HittingStats> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Start {
    Point {
        x: f64,
        y: f64,
    },
    /// Bottom of the left well, x₋(y₀).
    LeftWell {
        y0: f64,
    },
    /// On ∂A: x = a(y₀).
    BoundaryA {
        y0: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub epsilon: f64,
    pub sigma: f64,
    pub rho: f64,
    pub dt: f64,
    pub rho_hat: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub max_time: f64,
    pub start: Start,
}

/// Points at which the set boundaries are tabulated before spline fitting.
const BOUNDARY_POINTS: usize = 256;

impl SimConfig {
    /// Step-size rule dt ≤ 0.01·ε·min(1, 1/ω²_max), plus positivity checks.
    /// `max_curvature` is the largest |∂ₓₓV| seen at the critical points.
    pub fn validate(&self, max_curvature: f64) -> Result<(), McError> {
        let bad = |m: String| Err(McError::BadConfig(m));
        if !(self.epsilon > 0.0 && self.sigma >= 0.0 && self.rho >= 0.0) {
            return bad(format!("need ε > 0, σ ≥ 0, ρ ≥ 0 (got {}, {}, {})", self.epsilon, self.sigma, self.rho));
        }
        if !(self.dt > 0.0 && self.max_time > 0.0 && self.rho_hat > 0.0) {
            return bad("dt, max_time and rho_hat must be positive".into());
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        let limit = 0.01 * self.epsilon / max_curvature.max(1.0);
        if self.dt > limit * (1.0 + 1e-12) {
            return bad(format!("dt = {} exceeds 0.01·ε/max(1, ω²) = {limit}", self.dt));
        }
        Ok(())
    }

    /// A cutoff below ten predicted means censors too much of the tail.
    pub fn max_time_covers(&self, predicted_mean: f64) -> bool {
        self.max_time >= 10.0 * predicted_mean
    }
}

/// a(y), b(y) and the saddle curve, tabulated once per run.
#[derive(Debug, Clone)]
pub struct Boundaries {
    pub a: PeriodicSpline,
    pub b: PeriodicSpline,
    pub saddle: PeriodicSpline,
    pub x_minus: PeriodicSpline,
    /// Largest curvature |∂ₓₓV| at the three critical points.
    pub max_curvature: f64,
}

impl Boundaries {
    pub fn new<P: Potential + ?Sized>(model: &P, rho_hat: f64) -> Result<Self, McError> {
        let sets = TransitionSets { rho_hat };
        let geo = (0..BOUNDARY_POINTS)
            .map(|j| find_critical_points(model, j as f64 / BOUNDARY_POINTS as f64))
            .collect::<Result<Vec<_>, _>>()?;
        for g in &geo {
            sets.check(g).map_err(|e| McError::BadConfig(e.to_string()))?;
        }
        let curve =
            |f: &dyn Fn(&crate::potential::WellGeometry) -> f64| PeriodicSpline::new(&geo.iter().map(f).collect::<Vec<_>>());
        let max_curvature = geo.iter().map(|g| g.omega_minus.max(g.omega_plus).max(g.omega0).powi(2)).fold(0.0, f64::max);
        Ok(Boundaries {
            a: curve(&|g| sets.a(g)),
            b: curve(&|g| sets.b(g)),
            saddle: curve(&|g| g.x_saddle),
            x_minus: curve(&|g| g.x_minus),
            max_curvature,
        })
    }

    fn start_point(&self, start: Start) -> (f64, f64) {
        match start {
            Start::Point { x, y } => (x, y),
            Start::LeftWell { y0 } => (self.x_minus.eval(y0), y0),
            Start::BoundaryA { y0 } => (self.a.eval(y0), y0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub x: f64,
    /// Unwrapped: winding number is ⌊y⌋ − ⌊y₀⌋.
    pub y: f64,
}

/// One sample path, advanced step by step.
pub struct Trajectory<'a, P: ?Sized> {
    model: &'a P,
    rng: ChaCha8Rng,
    state: State,
    path: u64,
    dt: f64,
    inv_eps: f64,
    sx: f64,
    sy: f64,
    bound: f64,
}

impl<'a, P: Potential + ?Sized> Trajectory<'a, P> {
    pub fn new(model: &'a P, config: &SimConfig, path: u64, x0: f64, y0: f64) -> Self {
        let sq = config.dt.sqrt();
        Trajectory {
            model,
            rng: substream(config.seed, path),
            state: State { t: 0.0, x: x0, y: y0 },
            path,
            dt: config.dt,
            inv_eps: 1.0 / config.epsilon,
            sx: config.sigma / config.epsilon.sqrt() * sq,
            sy: config.sigma * config.rho * sq,
            bound: 10.0 * model.confinement().l,
        }
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn step(&mut self) -> Result<State, McError> {
        let State { t, x, y } = self.state;
        let xi: f64 = self.rng.sample(StandardNormal);
        // ρ = 0 consumes no y-noise, so the stream is not shared by design.
        let eta: f64 = if self.sy > 0.0 { self.rng.sample(StandardNormal) } else { 0.0 };
        let x = x + self.model.drift(x, y.rem_euclid(1.0)) * self.inv_eps * self.dt + self.sx * xi;
        let y = y + self.dt + self.sy * eta;
        let t = t + self.dt;
        if !(x.abs() <= self.bound) {
            return Err(McError::Blowup { path: self.path, t, x, bound: self.bound });
        }
        self.state = State { t, x, y };
        Ok(self.state)
    }
}

/// Records `steps` states of path `index` (plus the initial one).
pub fn simulate_path<P: Potential + ?Sized>(
    model: &P,
    config: &SimConfig,
    index: u64,
    steps: usize,
) -> Result<Vec<State>, McError> {
    let bounds = Boundaries::new(model, config.rho_hat)?;
    let (x0, y0) = bounds.start_point(config.start);
    let mut tr = Trajectory::new(model, config, index, x0, y0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(tr.state());
    for _ in 0..steps {
        out.push(tr.step()?);
    }
    Ok(out)
}

/// Time at which x − b(y) changes sign inside the last step, by linear
/// interpolation of the gap.
fn crossing_time(prev: State, next: State, gap_prev: f64, gap_next: f64) -> f64 {
    let theta = gap_prev / (gap_prev - gap_next);
    prev.t + theta.clamp(0.0, 1.0) * (next.t - prev.t)
}

fn hit_b<P: Potential + ?Sized>(model: &P, config: &SimConfig, bounds: &Boundaries, path: u64) -> Result<Option<f64>, McError> {
    let (x0, y0) = bounds.start_point(config.start);
    let gap = |s: State| bounds.b.eval(s.y.rem_euclid(1.0)) - s.x;
    let mut tr = Trajectory::new(model, config, path, x0, y0);
    let mut prev = tr.state();
    let mut g_prev = gap(prev);
    if g_prev <= 0.0 {
        return Ok(Some(0.0));
    }
    while prev.t < config.max_time {
        let next = tr.step()?;
        let g = gap(next);
        if g <= 0.0 {
            return Ok(Some(crossing_time(prev, next, g_prev, g)));
        }
        prev = next;
        g_prev = g;
    }
    Ok(None)
}

/// τ_B for every path in index order; None marks a censored path.
pub fn hitting_times<P: Potential + Sync + ?Sized>(model: &P, config: &SimConfig) -> Result<Vec<Option<f64>>, McError> {
    let bounds = Boundaries::new(model, config.rho_hat)?;
    config.validate(bounds.max_curvature)?;
    (0..config.n_paths as u64).into_par_iter().map(|i| hit_b(model, config, &bounds, i)).collect()
}

/// Summary of τ_B over all paths. More than 1% censoring is an error that
/// still carries the statistics.
pub fn first_hit_b<P: Potential + Sync + ?Sized>(model: &P, config: &SimConfig) -> Result<HittingStats, McError> {
    let times = hitting_times(model, config)?;
    let stats = summarize(&times);
    if stats.flagged {
        return Err(McError::ExcessCensoring { censored: stats.censored, total: times.len(), stats: Box::new(stats) });
    }
    Ok(stats)
}

pub fn summarize(times: &[Option<f64>]) -> HittingStats {
    let hits: Vec<f64> = times.iter().flatten().copied().collect();
    HittingStats::from_samples(&hits, times.len() - hits.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommittorEstimate {
    /// Fraction of decided paths that reached A first.
    pub value: f64,
    pub stderr: f64,
    pub decided: usize,
    pub censored: usize,
}

/// P_{(x,y)}[τ_A < τ_B] from `n` paths; streams are keyed by path index
/// under `config.seed`, independently of `config.start`.
pub fn empirical_committor<P: Potential + Sync + ?Sized>(
    model: &P,
    config: &SimConfig,
    x: f64,
    y: f64,
    n: usize,
) -> Result<CommittorEstimate, McError> {
    let bounds = Boundaries::new(model, config.rho_hat)?;
    config.validate(bounds.max_curvature)?;
    let outcomes: Vec<Option<bool>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut tr = Trajectory::new(model, config, i, x, y);
            let mut s = tr.state();
            loop {
                let yy = s.y.rem_euclid(1.0);
                if s.x <= bounds.a.eval(yy) {
                    return Ok(Some(true));
                }
                if s.x >= bounds.b.eval(yy) {
                    return Ok(Some(false));
                }
                if s.t >= config.max_time {
                    return Ok(None);
                }
                s = tr.step()?;
            }
        })
        .collect::<Result<_, McError>>()?;
    let decided = outcomes.iter().flatten().count();
    let hits_a = outcomes.iter().flatten().filter(|&&a| a).count();
    let value = hits_a as f64 / decided.max(1) as f64;
    Ok(CommittorEstimate {
        value,
        stderr: (value * (1.0 - value) / decided.max(1) as f64).sqrt(),
        decided,
        censored: n - decided,
    })
}

/// Time-averaged occupation over x-bins and equal y-bins of [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub x_edges: Vec<f64>,
    pub y_bins: usize,
    /// mass[b][i]: fraction of time in y-bin b and x-bin i.
    pub mass: Vec<Vec<f64>>,
    /// Fraction of time outside the x-range.
    pub outside: f64,
    /// Per y-bin, fraction of that bin's time spent left of the saddle.
    pub left_of_saddle: Vec<f64>,
    pub samples: u64,
}

/// Runs `config.n_paths` independent chains, each for `burn_in` and then
/// `total / n_paths` of recorded time.
pub fn empirical_invariant<P: Potential + Sync + ?Sized>(
    model: &P,
    config: &SimConfig,
    burn_in: f64,
    total: f64,
    x_edges: &[f64],
    y_bins: usize,
) -> Result<OccupationHistogram, McError> {
    if x_edges.len() < 2 || x_edges.windows(2).any(|w| !(w[1] > w[0])) || y_bins == 0 {
        return Err(McError::BadConfig("x_edges must increase and y_bins must be positive".into()));
    }
    let bounds = Boundaries::new(model, config.rho_hat)?;
    config.validate(bounds.max_curvature)?;
    let (x0, y0) = bounds.start_point(config.start);
    let burn_steps = (burn_in / config.dt).round() as u64;
    let rec_steps = (total / config.n_paths as f64 / config.dt).round() as u64;
    let nx = x_edges.len() - 1;

    struct Counts {
        cells: Vec<u64>,
        outside: u64,
        per_y: Vec<u64>,
        left: Vec<u64>,
    }
    let chains: Vec<Counts> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|c| {
            let mut tr = Trajectory::new(model, config, c, x0, y0);
            for _ in 0..burn_steps {
                tr.step()?;
            }
            let mut k = Counts { cells: vec![0; y_bins * nx], outside: 0, per_y: vec![0; y_bins], left: vec![0; y_bins] };
            for _ in 0..rec_steps {
                let s = tr.step()?;
                let y = s.y.rem_euclid(1.0);
                let b = ((y * y_bins as f64) as usize).min(y_bins - 1);
                k.per_y[b] += 1;
                if s.x < bounds.saddle.eval(y) {
                    k.left[b] += 1;
                }
                let i = x_edges.partition_point(|&e| e <= s.x);
                if i == 0 || i > nx {
                    k.outside += 1;
                } else {
                    k.cells[b * nx + i - 1] += 1;
                }
            }
            Ok(k)
        })
        .collect::<Result<_, McError>>()?;

    // Integer totals: the reduction is exact and order-free.
    let mut cells = vec![0u64; y_bins * nx];
    let (mut outside, mut per_y, mut left) = (0u64, vec![0u64; y_bins], vec![0u64; y_bins]);
    for k in &chains {
        cells.iter_mut().zip(&k.cells).for_each(|(a, b)| *a += b);
        per_y.iter_mut().zip(&k.per_y).for_each(|(a, b)| *a += b);
        left.iter_mut().zip(&k.left).for_each(|(a, b)| *a += b);
        outside += k.outside;
    }
    let samples = rec_steps * config.n_paths as u64;
    let norm = samples.max(1) as f64;
    Ok(OccupationHistogram {
        x_edges: x_edges.to_vec(),
        y_bins,
        mass: cells.chunks(nx).map(|row| row.iter().map(|&c| c as f64 / norm).collect()).collect(),
        outside: outside as f64 / norm,
        left_of_saddle: left.iter().zip(&per_y).map(|(&l, &p)| l as f64 / p.max(1) as f64).collect(),
        samples,
    })
}

/// ½Σ|p − q| over matching cells; mass outside the grid of either counts fully.
pub fn total_variation(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let inside: f64 = p.iter().zip(q).flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs())).sum();
    let mp: f64 = p.iter().flatten().sum();
    let mq: f64 = q.iter().flatten().sum();
    0.5 * (inside + (1.0 - mp).abs() + (1.0 - mq).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_tilted_quartic, Confinement};

    fn config(eps: f64, sigma: f64, paths: usize) -> SimConfig {
        SimConfig {
            epsilon: eps,
            sigma,
            rho: 0.5,
            dt: 1e-3 * eps,
            rho_hat: 0.3,
            seed: 11,
            n_paths: paths,
            max_time: 50.0,
            start: Start::LeftWell { y0: 0.0 },
        }
    }

    #[test]
    fn zero_noise_relaxes_to_left_branch() {
        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let mut c = config(0.05, 0.0, 1);
        c.start = Start::Point { x: -0.5, y: 0.0 };
        let path = simulate_path(&m, &c, 0, 20_000).unwrap();
        let last = path.last().unwrap();
        let target = find_critical_points(&m, last.y.rem_euclid(1.0)).unwrap().x_minus;
        // Adiabatic lag is O(ε).
        assert!((last.x - target).abs() < 0.05, "{} vs {target}", last.x);
    }

    struct Free;
    impl Potential for Free {
        fn v(&self, _: f64, _: f64) -> f64 {
            0.0
        }
        fn dx(&self, _: f64, _: f64) -> f64 {
            0.0
        }
        fn dxx(&self, _: f64, _: f64) -> f64 {
            0.0
        }
        fn dy(&self, _: f64, _: f64) -> f64 {
            0.0
        }
        fn dxy(&self, _: f64, _: f64) -> f64 {
            0.0
        }
        fn dyy(&self, _: f64, _: f64) -> f64 {
            0.0
        }
        fn confinement(&self) -> Confinement {
            Confinement { m: 0.0, l: 1e6 }
        }
    }

    #[test]
    fn free_motion_has_brownian_variance() {
        let c = config(0.5, 0.3, 1);
        let n = 10_000u64;
        let steps = 200;
        let finals: Vec<f64> = (0..n)
            .map(|i| {
                let mut tr = Trajectory::new(&Free, &c, i, 0.0, 0.0);
                (0..steps).for_each(|_| {
                    tr.step().unwrap();
                });
                tr.state().x
            })
            .collect();
        let t = steps as f64 * c.dt;
        let var = finals.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let expect = c.sigma * c.sigma * t / c.epsilon;
        // Var of the sample second moment is 2·expect²/n.
        assert!((var - expect).abs() < 3.0 * expect * (2.0 / n as f64).sqrt(), "{var} vs {expect}");
    }

    #[test]
    fn paths_are_bit_identical_across_runs() {
        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let c = config(0.2, 0.45, 1);
        let a = simulate_path(&m, &c, 5, 1000).unwrap();
        let b = simulate_path(&m, &c, 5, 1000).unwrap();
        assert_eq!(a, b);
        let other = simulate_path(&m, &c, 6, 1000).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let m = make_tilted_quartic(1.0, 0.1, 0.0);
        let mut c = config(0.2, 0.45, 10);
        c.dt = 0.01;
        assert!(matches!(hitting_times(&m, &c), Err(McError::BadConfig(_))));
    }

    #[test]
    fn short_cutoff_is_flagged() {
        let m = make_tilted_quartic(1.0, 0.0, 0.0);
        let mut c = config(1.0, 0.45, 64);
        c.max_time = 0.5;
        match first_hit_b(&m, &c) {
            Err(McError::ExcessCensoring { censored, total, .. }) => {
                assert_eq!(total, 64);
                assert!(censored > 60);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn committor_boundaries_and_symmetry() {
        let m = make_tilted_quartic(1.0, 0.0, 0.0);
        let c = config(1.0, 0.45, 1);
        let near_a = empirical_committor(&m, &c, -0.7 + 1e-6, 0.0, 200).unwrap();
        assert!(near_a.value > 0.95);
        let mid = empirical_committor(&m, &c, 0.0, 0.0, 2000).unwrap();
        assert!((mid.value - 0.5).abs() < 3.0 * mid.stderr.max(0.5 / 2000f64.sqrt()), "{mid:?}");
    }

    #[test]
    fn survival_starts_at_one_and_decreases() {
        let m = make_tilted_quartic(1.0, 0.0, 0.0);
        let mut c = config(1.0, 0.6, 200);
        c.max_time = 400.0;
        let hits: Vec<f64> = hitting_times(&m, &c).unwrap().into_iter().flatten().collect();
        let s: Vec<f64> = (0..20).map(|k| crate::stats::empirical_survival(&hits, k as f64)).collect();
        assert_eq!(s[0], 1.0);
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn tv_of_identical_histograms_is_zero() {
        let p = vec![vec![0.25, 0.25], vec![0.25, 0.25]];
        assert_eq!(total_variation(&p, &p), 0.0);
        let q = vec![vec![0.5, 0.0], vec![0.25, 0.25]];
        assert!((total_variation(&p, &q) - 0.25).abs() < 1e-15);
    }
}
