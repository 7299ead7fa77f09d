use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kramers_cli::config::RunConfig;
use kramers_cli::verify::run_verify;
use kramers_cli::{plot, stages, CliError};

/// Transition times, invariant densities and capacities of a periodically
/// forced double well. All times are on the rescaled clock (divide by ε for
/// the unscaled one).
#[derive(Parser)]
#[command(name = "kramers", version)]
struct Cli {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides mc.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// λ₁, Kramers rates and asymmetry per slice → spectral.csv
    Spectral,
    /// Two-state δ, closed-form mean and sampler → jump.csv, jump.json
    Jump,
    /// δ₁, α₁ and π → invariant.csv, pi.csv
    Invariant {
        /// Also run the long occupation simulation and fill p_minus_mc.
        #[arg(long)]
        with_mc: bool,
    },
    /// Dirichlet and Thomson bounds → capacity.json
    Capacity,
    /// First hitting times of B → tau.csv, simulate.json
    Simulate {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        /// Starting slice y₀; paths start on ∂A there.
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        max_time: Option<f64>,
    },
    /// Closed-form laws, regime and envelopes → predict.json
    Predict,
    /// Full theory-vs-simulation comparison → verify.json; exit 1 on any failed check
    Verify,
    /// SVG charts from the CSV artifacts in the output directory
    Plot,
    /// Print the default configuration as JSON
    DefaultConfig,
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Command::Simulate { epsilon, sigma, rho, dt, paths, start, max_time } = &cli.command {
        let set = |dst: &mut f64, v: &Option<f64>| {
            if let Some(v) = v {
                *dst = *v;
            }
        };
        set(&mut cfg.epsilon, epsilon);
        set(&mut cfg.sigma, sigma);
        set(&mut cfg.rho, rho);
        set(&mut cfg.mc.dt, dt);
        set(&mut cfg.mc.start_y, start);
        set(&mut cfg.mc.max_time, max_time);
        if let Some(p) = paths {
            cfg.mc.paths = *p;
        }
    }
    cfg.validate()?;
    if let Command::DefaultConfig = cli.command {
        print!("{}", kramers_cli::output::to_json(&cfg).map_err(std::io::Error::other)?);
        return Ok(ExitCode::SUCCESS);
    }
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;

    match cli.command {
        Command::Spectral => {
            let s = stages::spectral(&cfg, &out)?;
            println!("max |lambda1/kramers - 1| = {:.4}", s.max_relative_gap());
        }
        Command::Jump => {
            let j = stages::jump(&cfg, &out)?;
            println!(
                "closed form {:.6}, sampler {:.6} ± {:.6}",
                j.report.closed_form_mean, j.report.simulated.mean, j.report.simulated.stderr
            );
        }
        Command::Invariant { with_mc } => {
            let s = stages::spectral(&cfg, &out)?;
            let inv = stages::invariant(&cfg, &out, &s.profile, with_mc)?;
            println!("mass {:.12}, min density {:.3e}", inv.density.mass(), inv.density.min_value);
        }
        Command::Capacity => {
            let s = stages::spectral(&cfg, &out)?;
            let inv = stages::invariant(&cfg, &out, &s.profile, false)?;
            let c = stages::capacity_stage(&cfg, &out, &s.profile, &inv.expansion)?;
            println!(
                "C0 {:.6e}, Dirichlet {:.6e} (+{:.2e}), Thomson {:.6e} (-{:.2e})",
                c.c0, c.dirichlet_upper, c.defect_upper, c.thomson_lower, c.defect_lower
            );
        }
        Command::Simulate { .. } => {
            let r = stages::simulate(&cfg, &out)?;
            println!(
                "mean tau_B {:.6} ± {:.6} (rescaled clock; unscaled {:.6}), censored {}",
                r.stats.mean, r.stats.stderr, r.unscaled_mean, r.stats.censored
            );
            if r.stats.flagged {
                eprintln!("more than 1% of paths were censored; raise --max-time");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Predict => {
            let p = stages::predict(&cfg, &out)?;
            println!("regime {:?}, eps/<r_->= {:.6}", p.regime.regime, p.fast_forcing.value);
        }
        Command::Verify => {
            let report = run_verify(&cfg, &out)?;
            for c in &report.checks {
                println!("{}", c.line());
            }
            return Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Plot => {
            for p in plot::render_plots(&out)? {
                println!("{}", p.display());
            }
        }
        Command::DefaultConfig => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
