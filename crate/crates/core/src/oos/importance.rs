//! Importance weights turning full-data posterior draws into approximate
//! training-data posterior draws, `w_k^s ∝ 1 / p(y_{I_k} | theta^s)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldWeights {
    /// Normalized weights over the S draws, one vector per fold.
    pub weights: Vec<Vec<f64>>,
    /// `1 / sum w^2` per fold.
    pub ess: Vec<f64>,
    /// Number of clipped weights per fold.
    pub truncated: Vec<usize>,
}

impl FoldWeights {
    pub fn uniform(num_draws: usize, k: usize) -> Self {
        FoldWeights {
            weights: vec![vec![1.0 / num_draws as f64; num_draws]; k],
            ess: vec![num_draws as f64; k],
            truncated: vec![0; k],
        }
    }
}

/// Normalized weights from unnormalized log-weights, optionally clipped at
/// the `1 - 1/sqrt(S)` quantile of the raw weights.
pub fn normalize_log_weights(log_w: &[f64], truncate: bool) -> Option<(Vec<f64>, f64, usize)> {
    let s = log_w.len();
    if s == 0 || log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return None;
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = log_w.iter().map(|v| (v - top).exp()).collect();
    let mut clipped = 0;
    if truncate && s > 1 {
        let cap = linalg::quantile(&linalg::sorted(&w), 1.0 - 1.0 / (s as f64).sqrt());
        for v in w.iter_mut() {
            if *v > cap {
                *v = cap;
                clipped += 1;
            }
        }
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    w.iter_mut().for_each(|v| *v /= total);
    let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
    Some((w, ess, clipped))
}

/// Per-fold weights from the `S x n` matrix of pointwise log-likelihoods.
pub fn importance_weights(log_lik: &DMatrix<f64>, plan: &FoldPlan, truncate: bool) -> Result<FoldWeights> {
    check_dim("log-likelihood columns vs subjects", plan.n(), log_lik.ncols())?;
    let s_count = log_lik.nrows();
    if s_count == 0 {
        return Err(Error::invalid("no posterior draws"));
    }
    let mut out = FoldWeights {
        weights: Vec::with_capacity(plan.k),
        ess: Vec::with_capacity(plan.k),
        truncated: Vec::with_capacity(plan.k),
    };
    for fold in 0..plan.k {
        let rows = plan.validation_rows(fold);
        let log_w: Vec<f64> = (0..s_count)
            .map(|s| -rows.iter().map(|&i| log_lik[(s, i)]).sum::<f64>())
            .collect();
        let (w, ess, clipped) = normalize_log_weights(&log_w, truncate).ok_or(Error::WeightUnderflow { fold: fold + 1 })?;
        out.weights.push(w);
        out.ess.push(ess);
        out.truncated.push(clipped);
    }
    Ok(out)
}

/// Weighted predictive means `sum_s w_k^s h_i^s` for every fold and subject.
pub fn hbar_train(func_draws: &DMatrix<f64>, weights: &FoldWeights) -> Result<Vec<Vec<f64>>> {
    let (s_count, n) = func_draws.shape();
    weights
        .weights
        .iter()
        .map(|w| {
            check_dim("weights vs functional draws", s_count, w.len())?;
            Ok((0..n)
                .map(|i| (0..s_count).map(|s| w[s] * func_draws[(s, i)]).sum())
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_validation_set_gives_uniform_weights() {
        let (w, ess, c) = normalize_log_weights(&[0.0; 8], true).unwrap();
        assert!(w.iter().all(|v| (*v - 0.125).abs() < 1e-15));
        assert!((ess - 8.0).abs() < 1e-12);
        assert_eq!(c, 0);
    }

    #[test]
    fn single_draw() {
        let (w, ess, _) = normalize_log_weights(&[-1234.5], true).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(ess, 1.0);
    }

    #[test]
    fn large_log_weights_do_not_underflow() {
        let (w, _, _) = normalize_log_weights(&[-1e5, -1e5 + 1.0], false).unwrap();
        assert!((w[1] / w[0] - std::f64::consts::E).abs() < 1e-12);
        assert!(normalize_log_weights(&[f64::NAN, 0.0], false).is_none());
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 3], false).is_none());
    }

    #[test]
    fn truncation_clips_the_top_weights() {
        let log_w: Vec<f64> = (0..100).map(|s| s as f64 * 0.1).collect();
        let (w, _, clipped) = normalize_log_weights(&log_w, true).unwrap();
        assert!(clipped >= 1);
        let top = w.iter().copied().fold(0.0, f64::max);
        assert!(w.iter().filter(|v| **v == top).count() > 1);
    }
}
