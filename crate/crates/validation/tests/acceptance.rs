//! Acceptance suite: nine end-to-end criteria, one PASS/FAIL line each.
//! Runs without the libtest harness so the lines are never captured; the
//! process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use kramers_cli::config::RunConfig;
use kramers_cli::stages::{histogram_edges, HISTOGRAM_Y_BINS};
use kramers_cli::verify::run_verify;
use kramers_core::capacity::{capacity, TransitionSets};
use kramers_core::invariant::{assemble_pi, expand, ExpansionMethod, SpectralProfile};
use kramers_core::jump::{delta_periodic, mean_jump_time, simulate_jump, RateProfile};
use kramers_core::mc::{empirical_invariant, first_hit_b, total_variation, SimConfig, Start};
use kramers_core::numerics::PeriodicSpline;
use kramers_core::potential::make_tilted_quartic;
use kramers_core::predictor::{classify_regime, ek_fast_forcing, Barriers, Regime};
use kramers_core::rng::substream;
use kramers_core::spectral::{eigen_solve, kramers_rates, laplace_reference, FrozenSlice};
use kramers_core::stats::ks_critical_001;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Two-state exactness.
fn criterion_1() -> Outcome {
    let mut rng = substream(2024, 0);
    let mut worst = 0.0f64;
    let mut all = true;
    for k in 0..10 {
        let eps = 0.05 + 0.95 * rng.random::<f64>();
        let (base_m, base_p) = (0.02 + 0.2 * rng.random::<f64>(), 0.02 + 0.2 * rng.random::<f64>());
        let (c1, c2, phi) = (rng.random::<f64>(), 0.5 * rng.random::<f64>(), rng.random::<f64>());
        let n = 64;
        let y: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
        let rm: Vec<f64> =
            y.iter().map(|t| base_m * (c1 * (2.0 * PI * (t - phi)).cos() + c2 * (4.0 * PI * t).sin()).exp()).collect();
        let rp: Vec<f64> = y.iter().map(|t| base_p * (-c1 * (2.0 * PI * (t - phi)).cos()).exp()).collect();
        let a: Vec<f64> = rm.iter().zip(&rp).map(|(m, p)| (m - p) / (m + p)).collect();
        let profile = RateProfile::new(&rm, &rp, &a, eps).expect("valid profile");
        let y0 = rng.random::<f64>();
        let exact = mean_jump_time(&profile, y0);
        let sim = simulate_jump(&profile, y0, 100 + k, 10_000);
        let z = (sim.mean - exact).abs() / sim.stderr;
        worst = worst.max(z);
        all &= z <= 3.0;
    }
    let constant = RateProfile::new(&[0.1; 16], &[0.3; 16], &[-0.5; 16], 0.7).unwrap();
    let const_err = (mean_jump_time(&constant, 0.37) - 0.7 / 0.1).abs();
    outcome(
        all && const_err <= 1e-10,
        format!("worst |sampler - closed form| = {worst:.2} stderr over 10 profiles; constant-rate error {const_err:.1e}"),
    )
}

/// Spectral oracle on the symmetric quartic.
fn criterion_2() -> Outcome {
    let m = make_tilted_quartic(1.0, 0.0, 0.0);
    let sigmas = [0.45, 0.4, 0.35, 0.3];
    let errs: Vec<f64> = sigmas
        .iter()
        .map(|&s| {
            let slice = FrozenSlice::new(m, 0.0, s, 2048).unwrap();
            let l1 = eigen_solve(&slice, 1).unwrap().eigenvalues[1];
            (l1 / kramers_rates(&slice.geometry, s).lambda1 - 1.0).abs()
        })
        .collect();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let pass = errs[0] <= 0.25 && errs[2] <= 0.15 && monotone;
    let listing: Vec<String> = sigmas.iter().zip(&errs).map(|(s, e)| format!("σ={s}: {:.2}%", 100.0 * e)).collect();
    outcome(pass, format!("relative errors {}; decreasing in σ: {monotone}", listing.join(", ")))
}

/// Laplace suite.
fn criterion_3() -> Outcome {
    let cases = [(0.0, 0.0), (0.1, 0.0), (0.1, 0.25), (0.1, 0.5)];
    let mut worst = (0.0f64, String::new());
    let mut all = true;
    for &sigma in &[0.3, 0.2] {
        let band = 8.0 * sigma * sigma;
        for &(tilt, y) in &cases {
            let slice = FrozenSlice::new(make_tilted_quartic(1.0, tilt, 0.0), y, sigma, 512).unwrap();
            let g = slice.geometry;
            let r = laplace_reference(&g, sigma);
            let delta = 0.5 * (g.x_saddle - g.x_minus).min(g.x_plus - g.x_saddle);
            let ratios = [
                ("Z0", slice.log_z0().unwrap().exp() / r.z0),
                ("N", slice.log_committor_norm().unwrap().exp() / r.n),
                ("I0", slice.laplace_in(0, delta).unwrap() / r.i0),
                ("I2", slice.laplace_in(2, delta).unwrap() / r.i2),
                ("J1(0)", slice.laplace_jn(1, 0.0, delta).unwrap() / r.j1_at_saddle),
            ];
            for (name, q) in ratios {
                let dev = (q - 1.0).abs() / band;
                all &= dev <= 1.0;
                if dev > worst.0 {
                    worst = (dev, format!("{name} at σ={sigma}, tilt={tilt}, y={y}: ratio {q:.4}"));
                }
            }
        }
    }
    outcome(all, format!("worst |ratio - 1|/(8σ²) = {:.3} ({})", worst.0, worst.1))
}

/// Regime limits of δ on the default rate profile.
fn criterion_4() -> Outcome {
    let m = make_tilted_quartic(1.0, 0.1, 0.0);
    let base = RateProfile::from_model(&m, 0.45, 0.2, 64).unwrap();
    let mean_l = base.mean_lambda1();
    let min_l = base.min_lambda1();
    const N: usize = 4096;
    let target = (0..N)
        .map(|k| {
            let y = (k as f64 + 0.5) / N as f64;
            base.lambda1(y) * base.a(y)
        })
        .sum::<f64>()
        / N as f64
        / mean_l;
    let mut fast_worst = 0.0f64;
    for eps in [0.2, 1.0, 5.0] {
        let sol = delta_periodic(&base.with_epsilon(eps)).unwrap();
        let dev = sol.delta.iter().map(|d| (d - target).abs()).fold(0.0, f64::max);
        fast_worst = fast_worst.max(dev / (mean_l / eps));
    }
    let mut slow_worst = 0.0f64;
    for f in [1e-2, 1e-3] {
        let p = base.with_epsilon(f * min_l);
        let sol = delta_periodic(&p).unwrap();
        let dev = sol.y.iter().zip(&sol.delta).map(|(&y, d)| (d - p.a(y)).abs()).fold(0.0, f64::max);
        slow_worst = slow_worst.max(dev / f);
    }
    outcome(
        fast_worst <= 2.0 && slow_worst <= 2.0,
        format!(
            "fast forcing: sup|δ - ⟨λ₁A⟩/⟨λ₁⟩| = {fast_worst:.3}·⟨λ₁⟩/ε (limit 2); super-adiabatic: sup|δ - A| = {slow_worst:.3}·ε/min λ₁ (limit 2)"
        ),
    )
}

/// Static Eyring–Kramers law and exponential law.
fn criterion_5() -> Outcome {
    let m = make_tilted_quartic(1.0, 0.0, 0.0);
    let cfg = SimConfig {
        epsilon: 1.0,
        sigma: 0.45,
        rho: 0.0,
        dt: 1e-3,
        // τ₊ is the hitting time of x₊ itself.
        rho_hat: 1e-9,
        seed: 1,
        n_paths: 4000,
        max_time: 3000.0,
        start: Start::Point { x: -1.0, y: 0.0 },
    };
    let stats = first_hit_b(&m, &cfg).expect("no excess censoring");
    let ek = 2f64.sqrt() * PI * (0.5f64 / (0.45 * 0.45)).exp();
    let ratio = stats.mean / ek;
    let crit = ks_critical_001(stats.n);
    outcome(
        (ratio - 1.0).abs() <= 0.25 && stats.ks_stat < crit,
        format!(
            "mean τ₊ {:.3} ± {:.3} vs EK {ek:.3} (ratio {ratio:.3}); KS {:.4} vs critical {crit:.4}",
            stats.mean, stats.stderr, stats.ks_stat
        ),
    )
}

/// Fast-forcing law at the default point.
fn criterion_6() -> Outcome {
    let cfg = RunConfig::default();
    let m = cfg.model();
    let profile = RateProfile::from_model(&m, cfg.sigma, cfg.epsilon, cfg.grid.y_points).unwrap();
    let barriers = Barriers::from_model(&m, 256).unwrap();
    let pred = ek_fast_forcing(&profile, &barriers, cfg.sigma).value;
    let regime = classify_regime(&profile, &barriers, cfg.epsilon, cfg.sigma);
    let stats = first_hit_b(&m, &cfg.sim_config(Start::BoundaryA { y0: cfg.mc.start_y })).expect("no excess censoring");
    let ratio = stats.mean / pred;
    outcome(
        (ratio - 1.0).abs() <= 0.25 && regime.regime == Regime::FastForcingStrong,
        format!(
            "E[τ_B] {:.3} ± {:.3} vs ε/⟨r₋⟩ {pred:.3} (ratio {ratio:.3}); regime {:?} (ε/⟨λ₁⟩ = {:.2}, σ²/ε = {:.3})",
            stats.mean, stats.stderr, regime.regime, regime.forcing_slack, regime.noise_slack
        ),
    )
}

/// Invariant measure against a long simulation.
fn criterion_7() -> Outcome {
    let (sigma, eps, rho) = (0.4, 0.2, 0.0);
    let m = make_tilted_quartic(1.0, 0.1, 0.0);
    let sp = SpectralProfile::build(&m, sigma, 64, 2048, 8).unwrap();
    let exp = expand(&sp, eps, rho, ExpansionMethod::Coupled).unwrap();
    let density = assemble_pi(&sp, &exp);
    let edges = histogram_edges(&density, 48);
    let sim = SimConfig {
        epsilon: eps,
        sigma,
        rho,
        dt: 1e-3 * eps,
        rho_hat: 0.3,
        seed: 7,
        n_paths: 64,
        max_time: 1.0,
        start: Start::LeftWell { y0: 0.0 },
    };
    let hist = empirical_invariant(&m, &sim, 50.0, 5e4, &edges, HISTOGRAM_Y_BINS).unwrap();
    let tv = total_variation(&hist.mass, &density.bin_masses(&edges, HISTOGRAM_Y_BINS));
    // ½(1 − δ₁) averaged over each y-bin, the same window the histogram sees.
    let d1 = PeriodicSpline::new(&exp.delta1);
    let per_bin = 256;
    let sup = (0..HISTOGRAM_Y_BINS)
        .map(|b| {
            let theory = (0..per_bin)
                .map(|k| 0.5 * (1.0 - d1.eval((b as f64 + (k as f64 + 0.5) / per_bin as f64) / HISTOGRAM_Y_BINS as f64)))
                .sum::<f64>()
                / per_bin as f64;
            (hist.left_of_saddle[b] - theory).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        tv < 0.05 && sup < 0.03,
        format!("TV {tv:.4} (limit 0.05); sup |p₋ MC - ½(1-δ₁)| {sup:.4} (limit 0.03) over 8 y-bins"),
    )
}

/// Capacity bracket on the tilted family.
fn criterion_8() -> Outcome {
    let m = make_tilted_quartic(1.0, 0.1, 0.0);
    let sets = TransitionSets::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (sigma, lo, hi) in [(0.45, 0.5, 2.0), (0.35, 0.8, 1.25)] {
        let sp = SpectralProfile::build(&m, sigma, 64, 2048, 8).unwrap();
        let exp = expand(&sp, 0.2, 0.5, ExpansionMethod::Coupled).unwrap();
        let c = capacity(&m, &sp, &exp, &sets).unwrap();
        let (up, low) = (c.dirichlet_upper / c.c0, c.thomson_lower / c.c0);
        let ordered = c.thomson_lower <= c.dirichlet_upper;
        let inside = (lo..=hi).contains(&up) && (lo..=hi).contains(&low);
        pass &= ordered && inside;
        parts.push(format!(
            "σ={sigma}: Thomson/C₀ {low:.4} {} Dirichlet/C₀ {up:.4}, window [{lo}, {hi}] {}, with defects bracket {}",
            if ordered { "<=" } else { ">" },
            if inside { "ok" } else { "violated" },
            c.brackets()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Byte-identical verify artifacts across repeats and worker counts.
fn criterion_9() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.grid.y_points = 32;
    cfg.grid.x_points = 512;
    cfg.mc.paths = 300;
    cfg.mc.jump_samples = 2000;
    let runs: Vec<Vec<(String, Vec<u8>)>> = [1usize, 3, 3]
        .iter()
        .map(|&threads| {
            let dir = tempfile::tempdir().unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_verify(&cfg, dir.path())).expect("verify runs");
            snapshot(dir.path())
        })
        .collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = runs[0].iter().map(|(_, b)| b.len()).sum();
    outcome(
        identical && !runs[0].is_empty(),
        format!("{} artifacts ({bytes} bytes) identical across runs with 1, 3, 3 workers: {identical}", runs[0].len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("two-state exactness", criterion_1, Duration::from_secs(10)),
        ("spectral oracle", criterion_2, Duration::from_secs(30)),
        ("Laplace suite", criterion_3, Duration::from_secs(10)),
        ("δ regime limits", criterion_4, Duration::from_secs(5)),
        ("static Eyring-Kramers", criterion_5, Duration::from_secs(180)),
        ("fast-forcing law", criterion_6, Duration::from_secs(300)),
        ("invariant measure", criterion_7, Duration::from_secs(300)),
        ("capacity bracket", criterion_8, Duration::from_secs(60)),
        ("determinism", criterion_9, Duration::MAX),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = run();
        let took = t0.elapsed();
        let in_time = took <= *budget;
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        let budget = if *budget == Duration::MAX { String::new() } else { format!(" of {} s", budget.as_secs()) };
        println!(
            "criterion {} [{name}]: {} - {} ({:.1} s{budget}{})",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} of 9 criteria pass", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
