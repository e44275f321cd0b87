//! Out-of-sample losses and acceptable action sets.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::sir::FoldResample;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::solver::{LambdaPath, Loss};

/// Loss of predicting `pred` (the linear predictor) when `h` is realized.
pub fn unit_loss(loss: Loss, h: f64, pred: f64) -> f64 {
    match loss {
        Loss::Squared => (h - pred) * (h - pred),
        // -h log p - (1 - h) log(1 - p) with p = sigmoid(pred)
        Loss::CrossEntropy => {
            let sp = if pred > 0.0 { pred + (-pred).exp().ln_1p() } else { pred.exp().ln_1p() };
            sp - h * pred
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLoss {
    pub lambda: f64,
    /// Active-set size of the full-data fit at this penalty level.
    pub active_set_size: usize,
    pub empirical: f64,
    /// R draws of the predictive loss, paired across actions.
    pub predictive: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub actions: Vec<ActionLoss>,
    /// Index of the action with the smallest empirical loss (first on ties).
    pub min_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceConfig {
    /// Margin in percent.
    pub eta: f64,
    pub epsilon: f64,
}

impl AcceptanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) {
            return Err(Error::invalid(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptableSet {
    pub members: Vec<usize>,
    /// Estimated probability that each action is within `eta` percent.
    pub probabilities: Vec<f64>,
}

/// `100 (a - b) / b`, with `0 / 0 = 0`.
pub fn percent_increase(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (a - b) / b
    }
}

impl LossReport {
    pub fn new(actions: Vec<ActionLoss>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::invalid("loss report without actions"));
        }
        let r = actions[0].predictive.len();
        if actions.iter().any(|a| a.predictive.len() != r) {
            return Err(Error::invalid("predictive loss draws must be paired across actions"));
        }
        let mut min_index = 0;
        for (a, act) in actions.iter().enumerate() {
            if act.empirical < actions[min_index].empirical {
                min_index = a;
            }
        }
        Ok(LossReport { actions, min_index })
    }

    pub fn num_draws(&self) -> usize {
        self.actions[0].predictive.len()
    }

    /// Draws of the percent increase in predictive loss over the best action.
    pub fn percent_increase_draws(&self, a: usize) -> Vec<f64> {
        let base = &self.actions[self.min_index].predictive;
        self.actions[a]
            .predictive
            .iter()
            .zip(base)
            .map(|(x, b)| percent_increase(*x, *b))
            .collect()
    }

    /// Fraction of draws with percent increase below `eta`; 1 for the best action.
    pub fn prob_within(&self, a: usize, eta: f64) -> f64 {
        if a == self.min_index {
            return 1.0;
        }
        let d = self.percent_increase_draws(a);
        d.iter().filter(|v| **v < eta).count() as f64 / d.len() as f64
    }

    pub fn percent_increase_empirical(&self, a: usize) -> f64 {
        percent_increase(self.actions[a].empirical, self.actions[self.min_index].empirical)
    }
}

/// Actions with `P(D < eta) >= epsilon`, by counting draws.
pub fn acceptable_set(report: &LossReport, cfg: &AcceptanceConfig) -> AcceptableSet {
    let probabilities: Vec<f64> = (0..report.actions.len()).map(|a| report.prob_within(a, cfg.eta)).collect();
    let members = (0..report.actions.len())
        .filter(|&a| a == report.min_index || probabilities[a] >= cfg.epsilon)
        .collect();
    AcceptableSet { members, probabilities }
}

/// Same set via order statistics: an action is acceptable iff `eta` exceeds
/// the k-th smallest percent-increase draw, where k is the smallest count
/// with `k / R >= epsilon`.
pub fn acceptable_by_quantile(report: &LossReport, cfg: &AcceptanceConfig) -> Vec<usize> {
    let r = report.num_draws();
    let k = (0..=r).find(|&k| k as f64 / r as f64 >= cfg.epsilon);
    (0..report.actions.len())
        .filter(|&a| {
            if a == report.min_index {
                return true;
            }
            match k {
                None => false,
                Some(0) => true,
                Some(k) => linalg::sorted(&report.percent_increase_draws(a))[k - 1] < cfg.eta,
            }
        })
        .collect()
}

/// The acceptable action with the largest penalty.
pub fn simplest_acceptable(set: &AcceptableSet, path: &LambdaPath) -> usize {
    *set
        .members
        .iter()
        .max_by(|&&a, &&b| path.lambdas[a].total_cmp(&path.lambdas[b]).then(b.cmp(&a)))
        .expect("the acceptable set always contains the best action")
}

/// Empirical and predictive out-of-sample losses for every path action.
///
/// `fold_paths[k]` holds the fits trained without fold `k`; `h_obs` the
/// functional of the observed curves; `func_draws` the `S x n` functional
/// draws indexed by `resamples`.
#[allow(clippy::too_many_arguments)]
pub fn losses(
    plan: &FoldPlan,
    fold_paths: &[LambdaPath],
    full_path: &LambdaPath,
    design: &DMatrix<f64>,
    h_obs: &[f64],
    func_draws: &DMatrix<f64>,
    resamples: &[FoldResample],
    loss: Loss,
) -> Result<LossReport> {
    check_dim("fold paths", plan.k, fold_paths.len())?;
    check_dim("fold resamples", plan.k, resamples.len())?;
    check_dim("observed functionals", plan.n(), h_obs.len())?;
    check_dim("design rows", plan.n(), design.nrows())?;
    let n_actions = full_path.len();
    let r = resamples[0].indices.len();
    if resamples.iter().any(|f| f.indices.len() != r) {
        return Err(Error::invalid("every fold needs the same number of resampled draws"));
    }
    let mut actions: Vec<ActionLoss> = full_path
        .fits
        .iter()
        .map(|f| ActionLoss {
            lambda: f.lambda,
            active_set_size: f.active_set.len(),
            empirical: 0.0,
            predictive: vec![0.0; r],
        })
        .collect();
    let kf = plan.k as f64;
    for (fold, path) in fold_paths.iter().enumerate() {
        check_dim("fold path length", n_actions, path.len())?;
        let rows = plan.validation_rows(fold);
        if rows.is_empty() {
            continue;
        }
        let nk = rows.len() as f64;
        let idx = &resamples[fold].indices;
        for (act, fit) in actions.iter_mut().zip(&path.fits) {
            let preds: Vec<f64> = rows
                .iter()
                .map(|&i| design.row(i).iter().zip(&fit.delta).map(|(x, d)| x * d).sum())
                .collect();
            let emp: f64 = rows.iter().zip(&preds).map(|(&i, &p)| unit_loss(loss, h_obs[i], p)).sum::<f64>() / nk;
            act.empirical += emp / kf;
            for (slot, &s) in act.predictive.iter_mut().zip(idx) {
                let l: f64 = rows
                    .iter()
                    .zip(&preds)
                    .map(|(&i, &p)| unit_loss(loss, func_draws[(s, i)], p))
                    .sum::<f64>()
                    / nk;
                *slot += l / kf;
            }
        }
    }
    LossReport::new(actions)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q20: f64,
    pub q50: f64,
    pub q80: f64,
    pub q95: f64,
}

impl Quantiles {
    pub fn of(v: &[f64]) -> Self {
        let s = linalg::sorted(v);
        Quantiles {
            q05: linalg::quantile(&s, 0.05),
            q20: linalg::quantile(&s, 0.20),
            q50: linalg::quantile(&s, 0.50),
            q80: linalg::quantile(&s, 0.80),
            q95: linalg::quantile(&s, 0.95),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionSummary {
    pub lambda: f64,
    pub active_set_size: usize,
    pub empirical_loss: f64,
    pub predictive_loss_quantiles: Quantiles,
    pub prob_within_eta: f64,
    pub acceptable: bool,
}

/// Serializable digest of a report under one acceptance configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub eta: f64,
    pub epsilon: f64,
    pub min_index: usize,
    pub selected_index: usize,
    pub selected_lambda: f64,
    pub actions: Vec<ActionSummary>,
}

pub fn summarize(report: &LossReport, cfg: &AcceptanceConfig, path: &LambdaPath) -> ReportSummary {
    let set = acceptable_set(report, cfg);
    let selected = simplest_acceptable(&set, path);
    let actions = report
        .actions
        .iter()
        .enumerate()
        .map(|(a, act)| ActionSummary {
            lambda: act.lambda,
            active_set_size: act.active_set_size,
            empirical_loss: act.empirical,
            predictive_loss_quantiles: Quantiles::of(&act.predictive),
            prob_within_eta: set.probabilities[a],
            acceptable: set.members.contains(&a),
        })
        .collect();
    ReportSummary {
        eta: cfg.eta,
        epsilon: cfg.epsilon,
        min_index: report.min_index,
        selected_index: selected,
        selected_lambda: path.lambdas[selected],
        actions,
    }
}

/// Size versus percent increase in loss with 80% intervals, one row per action.
pub fn write_table_csv(report: &LossReport, cfg: &AcceptanceConfig, path: &Path) -> Result<()> {
    let set = acceptable_set(report, cfg);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let io = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record([
        "lambda",
        "active_set_size",
        "empirical_loss",
        "pct_increase_empirical",
        "pct_increase_q10",
        "pct_increase_q50",
        "pct_increase_q90",
        "prob_within_eta",
        "acceptable",
    ])
    .map_err(io)?;
    for (a, act) in report.actions.iter().enumerate() {
        let d = linalg::sorted(&report.percent_increase_draws(a));
        w.write_record([
            format!("{:?}", act.lambda),
            act.active_set_size.to_string(),
            format!("{:?}", act.empirical),
            format!("{:?}", report.percent_increase_empirical(a)),
            format!("{:?}", linalg::quantile(&d, 0.1)),
            format!("{:?}", linalg::quantile(&d, 0.5)),
            format!("{:?}", linalg::quantile(&d, 0.9)),
            format!("{:?}", set.probabilities[a]),
            set.members.contains(&a).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
