//! Run configuration: one JSON document with potential, noise, grid, Monte
//! Carlo and output groups.

use std::path::{Path, PathBuf};

use kramers_core::capacity::{TransitionSets, DEFAULT_RHO_HAT};
use kramers_core::invariant::DEFAULT_N_MAX;
use kramers_core::mc::{SimConfig, Start};
use kramers_core::potential::{make_tilted_quartic, TiltedQuartic};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// d in V₀ = x⁴/4 − d x²/2 − a cos(2π(y − φ)) x.
    pub base_depth: f64,
    pub tilt: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub y_points: usize,
    pub x_points: usize,
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub max_time: f64,
    /// Samples for the exact two-state sampler.
    pub jump_samples: usize,
    /// Starting slice for hitting-time runs; paths start on ∂A there.
    pub start_y: f64,
    /// Recorded time of the occupation histogram, summed over chains.
    pub invariant_time: f64,
    pub invariant_burn_in: f64,
    pub invariant_chains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    pub sigma: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub rho_hat: f64,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let epsilon = 0.2;
        RunConfig {
            potential: PotentialConfig { base_depth: 1.0, tilt: 0.1, phase: 0.0 },
            sigma: 0.45,
            epsilon,
            rho: 0.5,
            rho_hat: DEFAULT_RHO_HAT,
            grid: GridConfig { y_points: 64, x_points: 2048, n_max: DEFAULT_N_MAX },
            mc: McConfig {
                paths: 4000,
                dt: 1e-3 * epsilon,
                seed: 1,
                max_time: 400.0,
                jump_samples: 10_000,
                start_y: 0.0,
                invariant_time: 5e4,
                invariant_burn_in: 50.0,
                invariant_chains: 64,
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let finite = [
            self.sigma,
            self.epsilon,
            self.rho,
            self.rho_hat,
            self.potential.base_depth,
            self.potential.tilt,
            self.potential.phase,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("all parameters must be finite");
        }
        if !(self.sigma > 0.0) || !(self.epsilon > 0.0) || !(self.rho_hat > 0.0) {
            return fail("sigma, epsilon and rho_hat must be positive");
        }
        if self.rho < 0.0 {
            return fail("rho must be non-negative");
        }
        if self.grid.y_points < 16 {
            return fail("grid.y_points must be at least 16");
        }
        if self.grid.x_points < 64 || self.grid.n_max < 1 {
            return fail("grid.x_points must be at least 64 and grid.n_max at least 1");
        }
        let mc = &self.mc;
        if mc.paths == 0 || mc.jump_samples == 0 || mc.invariant_chains == 0 {
            return fail("mc counts must be positive");
        }
        if !(mc.dt > 0.0) || !(mc.max_time > 0.0) || !(mc.invariant_time > 0.0) || !(mc.invariant_burn_in >= 0.0) {
            return fail("mc times must be positive");
        }
        TransitionSets::new(self.rho_hat).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn model(&self) -> TiltedQuartic {
        make_tilted_quartic(self.potential.base_depth, self.potential.tilt, self.potential.phase)
    }

    pub fn sim_config(&self, start: Start) -> SimConfig {
        SimConfig {
            epsilon: self.epsilon,
            sigma: self.sigma,
            rho: self.rho,
            dt: self.mc.dt,
            rho_hat: self.rho_hat,
            seed: self.mc.seed,
            n_paths: self.mc.paths,
            max_time: self.mc.max_time,
            start,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::to_json;

    #[test]
    fn json_round_trip_is_lossless() {
        let mut c = RunConfig { sigma: 0.1 + 0.2, ..RunConfig::default() };
        c.mc.dt = 1.0 / 3.0 * 1e-4;
        let text = to_json(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(to_json(&back).unwrap(), text);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig::default();
        c.grid.y_points = 8;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        let c = RunConfig { sigma: -1.0, ..RunConfig::default() };
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = to_json(&RunConfig::default()).unwrap().replacen('{', "{\"bogus\": 1,", 1);
        assert!(serde_json::from_str::<RunConfig>(&text).is_err());
    }
}
