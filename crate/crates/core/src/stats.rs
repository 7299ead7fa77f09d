//! Summary statistics for first-passage samples.

use serde::{Deserialize, Serialize};

use crate::numerics::kahan_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Paths that reached the time cutoff without hitting.
    pub censored: usize,
    /// Kolmogorov distance between τ/mean and the unit exponential.
    pub ks_stat: f64,
    /// More than 1% of paths censored.
    pub flagged: bool,
}

impl HittingStats {
    /// `samples` holds the uncensored hitting times in path order.
    pub fn from_samples(samples: &[f64], censored: usize) -> Self {
        let n = samples.len();
        let total = n + censored;
        let mean = if n > 0 { kahan_sum(samples.iter().copied()) / n as f64 } else { f64::NAN };
        let var = if n > 1 { kahan_sum(samples.iter().map(|t| (t - mean).powi(2))) / (n - 1) as f64 } else { f64::NAN };
        let stderr = (var / n as f64).sqrt();
        HittingStats {
            n,
            mean,
            stderr,
            ci95_low: mean - 1.959_963_984_540_054 * stderr,
            ci95_high: mean + 1.959_963_984_540_054 * stderr,
            censored,
            ks_stat: ks_exponential(samples, mean),
            flagged: total > 0 && censored as f64 > 0.01 * total as f64,
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / (self.n + self.censored).max(1) as f64
    }
}

/// sup |F_n − F| for samples/scale against the unit exponential law.
pub fn ks_exponential(samples: &[f64], scale: f64) -> f64 {
    let mut u: Vec<f64> = samples.iter().map(|t| t / scale).collect();
    u.sort_by(f64::total_cmp);
    ks_sorted(&u, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() })
}

/// Kolmogorov statistic of sorted samples against a continuous CDF.
pub fn ks_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Kolmogorov critical value at level 0.01 (Stephens' finite-n form).
pub fn ks_critical_001(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    1.627_6 / (s + 0.12 + 0.11 / s)
}

/// Dvoretzky–Kiefer–Wolfowitz half-width at confidence 1 − alpha.
pub fn dkw_band(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Empirical survival function at t from unsorted samples.
pub fn empirical_survival(samples: &[f64], t: f64) -> f64 {
    samples.iter().filter(|&&s| s > t).count() as f64 / samples.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_quantiles_have_small_ks() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        assert!(ks_exponential(&s, 1.0) <= 0.5 / n as f64 + 1e-12);
        let stats = HittingStats::from_samples(&s, 0);
        assert!((stats.mean - 1.0).abs() < 0.01);
        assert!(!stats.flagged);
    }

    #[test]
    fn censoring_flag() {
        let s = vec![1.0; 98];
        assert!(HittingStats::from_samples(&s, 2).flagged);
        assert!(!HittingStats::from_samples(&s, 0).flagged);
    }

    #[test]
    fn critical_value_matches_asymptotics() {
        assert!((ks_critical_001(10_000) * 100.0 - 1.6276).abs() < 0.01);
    }
}
