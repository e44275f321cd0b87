//! Sampling-importance resampling of posterior draw indices.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::importance::FoldWeights;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    /// Resampled draws per fold.
    pub r: usize,
    /// Largest allowed `R / S`; `None` disables the guard.
    pub max_fraction: Option<f64>,
}

impl Default for SirConfig {
    fn default() -> Self {
        SirConfig {
            r: 1000,
            max_fraction: Some(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResample {
    /// Selected posterior draw indices, length R.
    pub indices: Vec<usize>,
    /// True when R exceeded the effective sample size (or the number of
    /// nonzero weights) and sampling fell back to drawing with replacement.
    pub with_replacement: bool,
}

/// Draws `R` indices per fold according to the fold weights, without
/// replacement whenever the weights support it.
pub fn sir_resample(weights: &FoldWeights, cfg: &SirConfig, seed: u64) -> Result<Vec<FoldResample>> {
    if cfg.r == 0 {
        return Err(Error::invalid("number of resampled draws must be positive"));
    }
    weights
        .weights
        .iter()
        .zip(&weights.ess)
        .enumerate()
        .map(|(fold, (w, &ess))| {
            let s = w.len();
            if let Some(frac) = cfg.max_fraction {
                if cfg.r as f64 > frac * s as f64 {
                    return Err(Error::invalid(format!(
                        "R = {} exceeds {frac} of the {s} posterior draws; use more draws or relax the guard",
                        cfg.r
                    )));
                }
            }
            let mut r = rng::stream(seed, fold as u64);
            let positive = w.iter().filter(|v| **v > 0.0).count();
            if (cfg.r as f64) <= ess && cfg.r <= positive {
                let idx = rand::seq::index::sample_weighted(&mut r, s, |i| w[i], cfg.r)
                    .map_err(|e| Error::invalid(format!("resampling weights: {e}")))?;
                Ok(FoldResample {
                    indices: idx.into_vec(),
                    with_replacement: false,
                })
            } else {
                let dist = WeightedIndex::new(w).map_err(|e| Error::invalid(format!("resampling weights: {e}")))?;
                Ok(FoldResample {
                    indices: (0..cfg.r).map(|_| dist.sample(&mut r)).collect(),
                    with_replacement: true,
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_subsample_without_replacement() {
        let w = FoldWeights::uniform(50, 2);
        let cfg = SirConfig { r: 5, max_fraction: Some(0.1) };
        let out = sir_resample(&w, &cfg, 3).unwrap();
        for f in &out {
            assert!(!f.with_replacement);
            let mut idx = f.indices.clone();
            idx.sort();
            idx.dedup();
            assert_eq!(idx.len(), 5);
        }
    }

    #[test]
    fn point_mass_selects_that_draw() {
        let mut w = vec![0.0; 20];
        w[7] = 1.0;
        let fw = FoldWeights {
            weights: vec![w],
            ess: vec![1.0],
            truncated: vec![0],
        };
        let out = sir_resample(&fw, &SirConfig { r: 1, max_fraction: None }, 0).unwrap();
        assert_eq!(out[0].indices, vec![7]);
        let more = sir_resample(&fw, &SirConfig { r: 2, max_fraction: None }, 0).unwrap();
        assert!(more[0].with_replacement);
        assert_eq!(more[0].indices, vec![7, 7]);
    }

    #[test]
    fn guard_rejects_large_r() {
        let w = FoldWeights::uniform(50, 1);
        assert!(sir_resample(&w, &SirConfig { r: 6, max_fraction: Some(0.1) }, 0).is_err());
    }
}
