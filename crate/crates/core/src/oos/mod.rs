//! Out-of-sample evaluation of actions without refitting the model.
//!
//! Each fold reweights the full-data posterior draws by the inverse
//! likelihood of its held-out subjects, refits the action path on the
//! reweighted predictive means of the training subjects, and scores the path
//! on the held-out subjects with both observed and resampled functionals.

mod folds;
mod importance;
mod report;
mod sir;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;
use crate::solver::{self, LambdaPath, Loss, SolverConfig};

pub use folds::{make_folds, FoldPlan};
pub use importance::{hbar_train, importance_weights, normalize_log_weights, FoldWeights};
pub use report::{
    acceptable_by_quantile, acceptable_set, losses, percent_increase, simplest_acceptable, summarize, unit_loss,
    write_table_csv, AcceptableSet, AcceptanceConfig, ActionLoss, ActionSummary, LossReport, Quantiles,
    ReportSummary,
};
pub use sir::{sir_resample, FoldResample, SirConfig};

/// Fits the action path of every fold on its training rows, using the fold's
/// weighted predictive means and the shared penalty grid.
pub fn fit_per_fold(
    plan: &FoldPlan,
    weights: &FoldWeights,
    func_draws: &DMatrix<f64>,
    design: &DMatrix<f64>,
    full_path: &LambdaPath,
    solver_cfg: &SolverConfig,
) -> Result<Vec<LambdaPath>> {
    if plan.k < 2 {
        return Err(Error::invalid("per-fold fitting needs at least two folds"));
    }
    check_dim("fold weights", plan.k, weights.weights.len())?;
    check_dim("design rows", plan.n(), design.nrows())?;
    let hbars = hbar_train(func_draws, weights)?;
    (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let train = plan.training_rows(fold);
            let h: Vec<f64> = train.iter().map(|&i| hbars[fold][i]).collect();
            let x = design.select_rows(&train);
            solver::path_on_grid(&h, &x, &full_path.weights, &full_path.lambdas, full_path.loss, solver_cfg)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OosConfig {
    pub k: usize,
    pub sir: SirConfig,
    pub truncate: bool,
    pub seed: u64,
}

impl Default for OosConfig {
    fn default() -> Self {
        OosConfig {
            k: 10,
            sir: SirConfig::default(),
            truncate: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OosResult {
    pub plan: FoldPlan,
    pub weights: FoldWeights,
    pub fold_paths: Vec<LambdaPath>,
    pub resamples: Vec<FoldResample>,
    pub report: LossReport,
}

/// Folds drawn from `seed` and SIR streams from a derived seed.
fn plan_for(n: usize, cfg: &OosConfig) -> Result<FoldPlan> {
    make_folds(n, cfg.k, rng::derive_seed(cfg.seed, 1))
}

/// Importance-weighted out-of-sample evaluation of every action on `full_path`.
///
/// `log_lik` and `func_draws` are `S x n`; `h_obs` holds the functional of
/// each observed curve.
pub fn evaluate_out_of_sample(
    log_lik: &DMatrix<f64>,
    func_draws: &DMatrix<f64>,
    h_obs: &[f64],
    design: &DMatrix<f64>,
    full_path: &LambdaPath,
    cfg: &OosConfig,
    solver_cfg: &SolverConfig,
) -> Result<OosResult> {
    check_dim("log-likelihood vs functional draws (rows)", func_draws.nrows(), log_lik.nrows())?;
    check_dim("log-likelihood vs functional draws (columns)", func_draws.ncols(), log_lik.ncols())?;
    let plan = plan_for(design.nrows(), cfg)?;
    let weights = importance_weights(log_lik, &plan, cfg.truncate)?;
    let fold_paths = fit_per_fold(&plan, &weights, func_draws, design, full_path, solver_cfg)?;
    let resamples = sir_resample(&weights, &cfg.sir, rng::derive_seed(cfg.seed, 2))?;
    let report = losses(&plan, &fold_paths, full_path, design, h_obs, func_draws, &resamples, full_path.loss)?;
    Ok(OosResult {
        plan,
        weights,
        fold_paths,
        resamples,
        report,
    })
}

/// In-sample analogue: full-data fits and unweighted predictive draws scored
/// on the same folds.
pub fn evaluate_in_sample(
    func_draws: &DMatrix<f64>,
    h_obs: &[f64],
    design: &DMatrix<f64>,
    full_path: &LambdaPath,
    cfg: &OosConfig,
) -> Result<OosResult> {
    let plan = plan_for(design.nrows(), cfg)?;
    let weights = FoldWeights::uniform(func_draws.nrows(), plan.k);
    let fold_paths = vec![full_path.clone(); plan.k];
    let resamples = sir_resample(&weights, &cfg.sir, rng::derive_seed(cfg.seed, 2))?;
    let report = losses(&plan, &fold_paths, full_path, design, h_obs, func_draws, &resamples, full_path.loss)?;
    Ok(OosResult {
        plan,
        weights,
        fold_paths,
        resamples,
        report,
    })
}

/// Loss kind matching a functional.
pub fn loss_for(binary: bool) -> Loss {
    if binary {
        Loss::CrossEntropy
    } else {
        Loss::Squared
    }
}
