//! Accuracy and selection metrics against a known truth.

use serde::{Deserialize, Serialize};

use crate::oos::LossReport;
use crate::solver::LambdaPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse_h: f64,
    /// NaN for predictors without coefficients.
    pub rmse_beta: f64,
    /// Selected true covariates over true covariates.
    pub tpr: f64,
    /// Selected null covariates over null covariates.
    pub fpr: f64,
    /// Excluded null covariates over null covariates.
    pub tnr: f64,
    pub size: usize,
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Metrics of a coefficient vector (intercept first) against `beta_star`.
/// `predictions` are compared with the true functional values `h_true`.
pub fn metrics(delta: Option<&[f64]>, predictions: &[f64], beta_star: &[f64], h_true: &[f64]) -> Metrics {
    let rmse_h = rmse(predictions, h_true);
    let Some(delta) = delta else {
        return Metrics {
            rmse_h,
            rmse_beta: f64::NAN,
            tpr: f64::NAN,
            fpr: f64::NAN,
            tnr: f64::NAN,
            size: 0,
        };
    };
    let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for j in 1..beta_star.len() {
        let selected = delta[j] != 0.0;
        if beta_star[j] != 0.0 {
            pos += 1;
            tp += selected as usize;
        } else {
            neg += 1;
            fp += selected as usize;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    Metrics {
        rmse_h,
        rmse_beta: rmse(delta, beta_star),
        tpr: ratio(tp, pos),
        fpr: ratio(fp, neg),
        tnr: ratio(neg - fp, neg),
        size: delta[1..].iter().filter(|d| **d != 0.0).count(),
    }
}

/// Probability that the true-support action is within `eta` percent of the
/// best action, for each `eta`. Zero when no path entry selects exactly the
/// true support; when several do, the largest probability is reported.
pub fn epsilon_max(report: &LossReport, path: &LambdaPath, support: &[usize], etas: &[f64]) -> Vec<f64> {
    let mut target: Vec<usize> = support.to_vec();
    target.sort_unstable();
    let matches: Vec<usize> = path
        .fits
        .iter()
        .enumerate()
        .filter(|(_, f)| f.active_set == target)
        .map(|(a, _)| a)
        .collect();
    etas.iter()
        .map(|&eta| matches.iter().map(|&a| report.prob_within(a, eta)).fold(0.0, f64::max))
        .collect()
}
