//! Optimal linear actions: penalized fits of predictive means.
//!
//! For squared loss the objective is
//!
//! ```text
//! (1/n) sum_i (hbar_i - x_i' d)^2 + lambda sum_j w_j |d_j|
//! ```
//!
//! with an unpenalized intercept in column 0 of the design. Cross-entropy
//! replaces the first term by the mean Bernoulli deviance with fractional
//! labels `hbar_i` in `[0, 1]`.

mod coordinate;
mod weights;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::functionals::FunctionalDraws;

pub use coordinate::PenalizedProblem;
pub use weights::{adaptive_weights, weights_from_coefficients, W_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Squared,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GKind {
    #[default]
    Linear,
    Unrestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    None,
    #[default]
    AdaptiveL1,
}

/// A parametrized action: predictor family, penalty and complexity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub g: GKind,
    pub penalty: Penalty,
    pub lambda: f64,
    /// One weight per non-intercept design column.
    pub weights: Vec<f64>,
    pub loss: Loss,
}

impl ActionSpec {
    pub fn adaptive_l1(lambda: f64, weights: Vec<f64>, loss: Loss) -> Self {
        ActionSpec {
            g: GKind::Linear,
            penalty: Penalty::AdaptiveL1,
            lambda,
            weights,
            loss,
        }
    }

    /// Unpenalized linear action (ordinary least squares on `hbar`).
    pub fn unpenalized(p: usize, loss: Loss) -> Self {
        ActionSpec {
            g: GKind::Linear,
            penalty: Penalty::None,
            lambda: 0.0,
            weights: vec![0.0; p],
            loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("penalty weights must be finite and nonnegative"));
        }
        if self.g == GKind::Unrestricted && self.penalty != Penalty::None {
            return Err(Error::invalid("unrestricted actions take no penalty"));
        }
        Ok(())
    }

    /// Effective per-column penalty weights, intercept first.
    fn column_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.weights.len() + 1);
        w.push(0.0);
        match self.penalty {
            Penalty::None => w.extend(std::iter::repeat_n(0.0, self.weights.len())),
            Penalty::AdaptiveL1 => w.extend_from_slice(&self.weights),
        }
        w
    }

    fn effective_lambda(&self) -> f64 {
        match self.penalty {
            Penalty::None => 0.0,
            Penalty::AdaptiveL1 => self.lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Convergence tolerance on the largest coefficient change per sweep.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Coefficients, intercept first.
    pub delta: Vec<f64>,
    /// Indices into `delta` (never 0) of nonzero penalized coefficients.
    pub active_set: Vec<usize>,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.delta).map(|(x, d)| x * d).sum()
    }

    pub fn predict(&self, design: &DMatrix<f64>) -> Vec<f64> {
        design
            .row_iter()
            .map(|r| r.iter().zip(&self.delta).map(|(x, d)| x * d).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub loss: Loss,
    pub weights: Vec<f64>,
    /// Decreasing penalty levels, the last one 0.
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
}

impl LambdaPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn action(&self, idx: usize) -> ActionSpec {
        ActionSpec::adaptive_l1(self.lambdas[idx], self.weights.clone(), self.loss)
    }
}

/// Soft-thresholding operator `sign(z) max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Optimal action parameters for predictive means `hbar` on `design`.
pub fn solve_penalized(hbar: &[f64], design: &DMatrix<f64>, spec: &ActionSpec) -> Result<FitResult> {
    solve_penalized_with(hbar, design, spec, &SolverConfig::default())
}

pub fn solve_penalized_with(hbar: &[f64], design: &DMatrix<f64>, spec: &ActionSpec, cfg: &SolverConfig) -> Result<FitResult> {
    spec.validate()?;
    if spec.g == GKind::Unrestricted {
        return Err(Error::invalid("unrestricted actions are solved by solve_unrestricted"));
    }
    check_dim("penalty weights vs design columns", design.ncols(), spec.weights.len() + 1)?;
    let problem = PenalizedProblem::new(hbar, design, spec.loss)?;
    problem.fit(spec.effective_lambda(), &spec.column_weights(), None, cfg)
}

/// Unrestricted, unpenalized action: the predictive mean at every point.
pub fn solve_unrestricted(func_draws: &FunctionalDraws) -> Vec<f64> {
    func_draws.hbar()
}

/// Smallest penalty level at which every penalized coefficient is zero.
pub fn lambda_max(hbar: &[f64], design: &DMatrix<f64>, weights: &[f64], loss: Loss) -> Result<f64> {
    check_dim("penalty weights vs design columns", design.ncols(), weights.len() + 1)?;
    check_dim("targets vs design rows", design.nrows(), hbar.len())?;
    let n = hbar.len() as f64;
    let mean = hbar.iter().sum::<f64>() / n;
    let scale = match loss {
        Loss::Squared => 2.0,
        Loss::CrossEntropy => 1.0,
    };
    let mut best = 0.0f64;
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let g: f64 = design.column(j + 1).iter().zip(hbar).map(|(x, h)| x * (h - mean)).sum();
        best = best.max(scale * g.abs() / (n * w));
    }
    Ok(best)
}

/// `n_lambda` log-spaced levels from `lmax` down to `ratio * lmax`, then 0.
pub fn lambda_grid(lmax: f64, n_lambda: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::invalid("a lambda path needs at least two levels"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("lambda ratio must lie in (0, 1), got {ratio}")));
    }
    // A flat target has lambda_max = 0; keep the grid strictly decreasing.
    let top = if lmax > 0.0 { lmax } else { f64::MIN_POSITIVE / ratio };
    let step = ratio.ln() / (n_lambda - 1) as f64;
    let mut out: Vec<f64> = (0..n_lambda).map(|k| top * (step * k as f64).exp()).collect();
    out[0] = top;
    out.push(0.0);
    Ok(out)
}

/// Warm-started fits on a log-spaced grid below `lambda_max`, plus `lambda = 0`.
pub fn lambda_path(
    hbar: &[f64],
    design: &DMatrix<f64>,
    weights: &[f64],
    n_lambda: usize,
    ratio: f64,
    loss: Loss,
    cfg: &SolverConfig,
) -> Result<LambdaPath> {
    let lmax = lambda_max(hbar, design, weights, loss)?;
    let lambdas = lambda_grid(lmax, n_lambda, ratio)?;
    path_on_grid(hbar, design, weights, &lambdas, loss, cfg)
}

/// Warm-started fits on a given decreasing grid.
pub fn path_on_grid(
    hbar: &[f64],
    design: &DMatrix<f64>,
    weights: &[f64],
    lambdas: &[f64],
    loss: Loss,
    cfg: &SolverConfig,
) -> Result<LambdaPath> {
    check_dim("penalty weights vs design columns", design.ncols(), weights.len() + 1)?;
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("penalty weights must be finite and nonnegative"));
    }
    let problem = PenalizedProblem::new(hbar, design, loss)?;
    let mut col_w = vec![0.0];
    col_w.extend_from_slice(weights);
    let mut fits = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Vec<f64>> = None;
    for &lam in lambdas {
        let fit = problem.fit(lam, &col_w, warm.as_deref(), cfg)?;
        warm = Some(fit.delta.clone());
        fits.push(fit);
    }
    Ok(LambdaPath {
        loss,
        weights: weights.to_vec(),
        lambdas: lambdas.to_vec(),
        fits,
    })
}
