//! The end-to-end comparison: spectral sweep, two-state closed form against
//! its sampler, δ₁ and π, the capacity bracket, and the SDE against the
//! fast-forcing law.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::output::write_json;
use crate::stages;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub stage: &'static str,
    pub name: &'static str,
    pub value: f64,
    pub target: f64,
    /// Meaning depends on the check; see `rule`.
    pub tolerance: f64,
    pub rule: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} {}.{}: value {:.6e}, target {:.6e}, tolerance {:.3e} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.stage,
            self.name,
            self.value,
            self.target,
            self.tolerance,
            self.rule
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub diagnostics: BTreeMap<&'static str, f64>,
    pub passed: bool,
}

fn rel(stage: &'static str, name: &'static str, value: f64, target: f64, tol: f64) -> Check {
    Check {
        stage,
        name,
        value,
        target,
        tolerance: tol,
        rule: "|value/target - 1| <= tolerance",
        pass: (value / target - 1.0).abs() <= tol,
    }
}

fn at_most(stage: &'static str, name: &'static str, value: f64, bound: f64) -> Check {
    Check { stage, name, value, target: bound, tolerance: 0.0, rule: "value <= target", pass: value <= bound }
}

fn window(stage: &'static str, name: &'static str, ratio: f64, lo: f64, hi: f64) -> Check {
    Check {
        stage,
        name,
        value: ratio,
        target: lo,
        tolerance: hi,
        rule: "target <= value <= tolerance",
        pass: (lo..=hi).contains(&ratio),
    }
}

/// Runs every stage in order, writing all artifacts and `verify.json` to `out`.
pub fn run_verify(cfg: &RunConfig, out: &Path) -> Result<VerifyReport, CliError> {
    let mut checks = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let finish = |checks: Vec<Check>, diagnostics| -> Result<VerifyReport, CliError> {
        let passed = checks.iter().all(|c| c.pass);
        let report = VerifyReport { config: cfg.clone(), checks, diagnostics, passed };
        write_json(&out.join("verify.json"), &report)?;
        Ok(report)
    };

    let validation = stages::validate_potential(cfg);
    checks.push(Check {
        stage: "potential",
        name: "assumptions",
        value: [validation.bistable, validation.nondegenerate, validation.confined, validation.periodic]
            .iter()
            .filter(|ok| !**ok)
            .count() as f64,
        target: 0.0,
        tolerance: 0.0,
        rule: "number of failed assumptions == 0",
        pass: validation.all_pass(),
    });
    if !validation.all_pass() {
        return finish(checks, diagnostics);
    }

    let sweep = stages::spectral(cfg, out)?;
    checks.push(at_most("spectral", "lambda1_vs_kramers", sweep.max_relative_gap(), 0.25));

    let jump = stages::jump(cfg, out)?;
    let sim = &jump.report.simulated;
    checks.push(Check {
        stage: "jump",
        name: "closed_form_vs_sampler",
        value: sim.mean,
        target: jump.report.closed_form_mean,
        tolerance: 3.0 * sim.stderr,
        rule: "|value - target| <= tolerance (3 stderr)",
        pass: (sim.mean - jump.report.closed_form_mean).abs() <= 3.0 * sim.stderr,
    });

    let inv = stages::invariant(cfg, out, &sweep.profile, false)?;
    checks.push(at_most("invariant", "mass_error", (inv.density.mass() - 1.0).abs(), 1e-6));
    checks.push(Check {
        stage: "invariant",
        name: "density_min",
        value: inv.density.min_value,
        target: 0.0,
        tolerance: 0.0,
        rule: "value >= target",
        pass: inv.density.min_value >= 0.0,
    });
    let sup_gap =
        inv.expansion.y.iter().zip(&inv.expansion.delta1).map(|(&y, d)| (d - inv.first_order.at(y)).abs()).fold(0.0, f64::max);
    diagnostics.insert("invariant.delta1_coupled_vs_first_order_sup", sup_gap);
    diagnostics.insert("invariant.delta1_mean", inv.expansion.delta1.iter().sum::<f64>() / inv.expansion.delta1.len() as f64);

    let cap = stages::capacity_stage(cfg, out, &sweep.profile, &inv.expansion)?;
    checks.push(Check {
        stage: "capacity",
        name: "bracket",
        value: cap.thomson_lower - cap.defect_lower,
        target: cap.dirichlet_upper + cap.defect_upper,
        tolerance: 0.0,
        rule: "lower - defect_lower <= upper + defect_upper",
        pass: cap.brackets(),
    });
    checks.push(window("capacity", "dirichlet_over_c0", cap.dirichlet_upper / cap.c0, 0.5, 2.0));
    checks.push(window("capacity", "thomson_over_c0", cap.thomson_lower / cap.c0, 0.5, 2.0));
    diagnostics.insert("capacity.c0", cap.c0);

    let simulated = stages::simulate(cfg, out)?;
    let predicted = stages::predict(cfg, out)?;
    checks.push(at_most("simulate", "censored_fraction", simulated.stats.censored_fraction(), 0.01));
    checks.push(rel("simulate", "mean_vs_fast_forcing", simulated.stats.mean, predicted.fast_forcing.value, 0.25));
    diagnostics.insert("predict.fast_forcing", predicted.fast_forcing.value);
    diagnostics.insert("predict.general_equilibrium", predicted.general_equilibrium.prediction.value);
    diagnostics.insert("predict.r1_envelope", predicted.fast_forcing.error_envelope);
    diagnostics.insert("predict.forcing_slack", predicted.regime.forcing_slack);
    diagnostics.insert("predict.noise_slack", predicted.regime.noise_slack);

    finish(checks, diagnostics)
}
