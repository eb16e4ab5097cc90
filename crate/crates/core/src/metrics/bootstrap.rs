use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_resamples: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_resamples == 0 {
            return Err(Error::Parameter("n_resamples must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over `n_items` items: each resample draws `n_items`
/// indices with replacement and evaluates `statistic` on them. Resamples on
/// which the statistic is undefined (`None`) are left out. Returns `None`
/// when no resample produced a value.
pub fn bootstrap_percentile<F>(n_items: usize, cfg: &BootstrapConfig, statistic: F) -> Result<Option<(f64, f64)>>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    cfg.validate()?;
    if n_items == 0 {
        return Err(Error::Parameter("bootstrap over zero items".into()));
    }
    let mut stats: Vec<f64> = (0..cfg.n_resamples)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n_items),
            |idx, r| {
                let mut rng = stream_rng(cfg.seed, r as u64);
                idx.clear();
                idx.extend((0..n_items).map(|_| rng.random_range(0..n_items)));
                statistic(idx)
            },
        )
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if stats.is_empty() {
        return Ok(None);
    }
    stats.sort_by(f64::total_cmp);
    Ok(Some((
        quantile(&stats, cfg.alpha / 2.0),
        quantile(&stats, 1.0 - cfg.alpha / 2.0),
    )))
}

/// Percentile bootstrap interval of the mean of `scores`. Sums are taken
/// relative to the first drawn item so constant scores give an exact interval.
pub fn bootstrap_ci(scores: &[f64], cfg: &BootstrapConfig) -> Result<(f64, f64)> {
    let ci = bootstrap_percentile(scores.len(), cfg, |idx| {
        let pivot = scores[idx[0]];
        Some(pivot + idx.iter().map(|&i| scores[i] - pivot).sum::<f64>() / idx.len() as f64)
    })?;
    Ok(ci.expect("mean is defined for every resample"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scores() {
        let cfg = BootstrapConfig::default();
        assert_eq!(bootstrap_ci(&[0.7; 50], &cfg).unwrap(), (0.7, 0.7));
    }

    #[test]
    fn bernoulli_width_matches_normal_approximation() {
        let mut rng = stream_rng(11, 0);
        let scores: Vec<f64> = (0..10_000).map(|_| f64::from(rng.random::<bool>() as u8)).collect();
        let cfg = BootstrapConfig {
            seed: 5,
            ..Default::default()
        };
        let (lo, hi) = bootstrap_ci(&scores, &cfg).unwrap();
        let expected = 2.0 * 1.96 * 0.5 / 100.0;
        assert!(((hi - lo) - expected).abs() <= 0.3 * expected, "{}", hi - lo);
        assert_eq!((lo, hi), bootstrap_ci(&scores, &cfg).unwrap());
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0], 0.5), 1.5);
        assert_eq!(quantile(&[4.0], 0.975), 4.0);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = BootstrapConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(bootstrap_ci(&[1.0, 2.0], &cfg).is_err());
        assert!(bootstrap_ci(&[], &BootstrapConfig::default()).is_err());
    }
}
