//! One end-to-end replication of the synthetic study and its aggregation.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{simulate, SimConfig, SimTruth};
use super::metrics::{epsilon_max, metrics, Metrics};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::functionals::{FunctionalSpec, Quadrature};
use crate::linalg;
use crate::model::{functional_draws, gibbs_fosr, FosrModel, GibbsConfig, PosteriorDrawSet, PredictiveMode};
use crate::oos::{self, AcceptanceConfig, OosConfig, SirConfig};
use crate::rng;
use crate::solver::{self, LambdaPath, Loss, SolverConfig, W_MAX};

pub const DEFAULT_ETA_GRID: [f64; 7] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub burnin: usize,
    pub keep: usize,
    pub num_basis: Option<usize>,
    pub t_dof: Option<f64>,
    pub folds: usize,
    /// Resampled draws per fold; defaults to a tenth of the kept draws.
    pub resample: Option<usize>,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub eta_grid: Vec<f64>,
    pub truncate: bool,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            burnin: 500,
            keep: 500,
            num_basis: None,
            t_dof: None,
            folds: 10,
            resample: None,
            n_lambda: 100,
            lambda_ratio: 1e-4,
            eta: 0.0,
            epsilon: 0.1,
            eta_grid: DEFAULT_ETA_GRID.to_vec(),
            truncate: true,
            tol: 1e-8,
            max_iters: 100_000,
        }
    }
}

impl EngineConfig {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }

    fn resample_count(&self) -> usize {
        self.resample.unwrap_or((self.keep / 10).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub replication: usize,
    pub n: usize,
    pub method: String,
    pub lambda: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutput {
    pub replication: usize,
    pub seed: u64,
    pub n: usize,
    pub methods: Vec<MethodRecord>,
    pub eta_grid: Vec<f64>,
    pub epsilon_max: Vec<f64>,
    pub min_ess: f64,
    pub resampled_with_replacement: usize,
    pub rhat_sigma_eps: f64,
}

pub const METHODS: [&str; 5] = ["proposed_out", "proposed_in", "proposed_full", "adaptive_lasso", "bayes"];

/// Adaptive lasso on observed functionals with pilot least-squares weights
/// and cross-validated penalty (smallest mean squared error).
pub fn baseline_adaptive_lasso(
    h_obs: &[f64],
    design: &nalgebra::DMatrix<f64>,
    engine: &EngineConfig,
    seed: u64,
) -> Result<(LambdaPath, usize)> {
    let y = DVector::from_column_slice(h_obs);
    let (pilot, _) = linalg::least_squares(design, &y, 1e-6)?;
    let weights = solver::weights_from_coefficients(&pilot, W_MAX);
    let cfg = engine.solver();
    let path = solver::lambda_path(h_obs, design, &weights, engine.n_lambda, engine.lambda_ratio, Loss::Squared, &cfg)?;
    let plan = oos::make_folds(design.nrows(), engine.folds, seed)?;
    let mut cv = vec![0.0; path.len()];
    for fold in 0..plan.k {
        let train = plan.training_rows(fold);
        let test = plan.validation_rows(fold);
        let ht: Vec<f64> = train.iter().map(|&i| h_obs[i]).collect();
        let fp = solver::path_on_grid(&ht, &design.select_rows(&train), &weights, &path.lambdas, Loss::Squared, &cfg)?;
        for (a, fit) in fp.fits.iter().enumerate() {
            let mse: f64 = test
                .iter()
                .map(|&i| {
                    let pred: f64 = design.row(i).iter().zip(&fit.delta).map(|(x, d)| x * d).sum();
                    (h_obs[i] - pred).powi(2)
                })
                .sum::<f64>()
                / test.len() as f64;
            cv[a] += mse / plan.k as f64;
        }
    }
    let best = (0..cv.len()).fold(0, |b, a| if cv[a] < cv[b] { a } else { b });
    Ok((path, best))
}

/// Fits the model, targets the argmax functional and scores every method.
pub fn run_replication_on(
    data: &Dataset,
    truth: &SimTruth,
    engine: &EngineConfig,
    replication: usize,
    seed: u64,
) -> Result<ReplicationOutput> {
    let design = data.design();
    let model = FosrModel::new(&data.tau, engine.num_basis, engine.t_dof)?;
    let gibbs = GibbsConfig {
        iters: engine.burnin + engine.keep,
        burnin: engine.burnin,
        seed: rng::derive_seed(seed, 10),
    };
    let draws = gibbs_fosr(data, &model, &gibbs)?;
    let rhat = draws.rhat_sigma_eps();
    let post = PosteriorDrawSet::Fosr(draws);

    let spec = FunctionalSpec::Argmax;
    let fd = functional_draws(&post, &design, PredictiveMode::Replicate, rng::derive_seed(seed, 11), &spec, &data.tau)?;
    let h_draws = fd.matrix();
    let hbar = fd.hbar();
    let quad = Quadrature::new(&data.tau)?;
    let h_obs: Vec<f64> = (0..data.n())
        .map(|i| quad.scalar(&spec, &data.curve(i)))
        .collect::<Result<_>>()?;

    let solver_cfg = engine.solver();
    let omega = solver::adaptive_weights(&h_draws, &design, W_MAX)?;
    let path = solver::lambda_path(&hbar, &design, &omega, engine.n_lambda, engine.lambda_ratio, Loss::Squared, &solver_cfg)?;

    let oos_cfg = OosConfig {
        k: engine.folds,
        sir: SirConfig {
            r: engine.resample_count(),
            max_fraction: Some(0.1),
        },
        truncate: engine.truncate,
        seed: rng::derive_seed(seed, 12),
    };
    let log_lik = post.log_lik_matrix(data)?;
    let out = oos::evaluate_out_of_sample(&log_lik, &h_draws, &h_obs, &design, &path, &oos_cfg, &solver_cfg)?;
    let inn = oos::evaluate_in_sample(&h_draws, &h_obs, &design, &path, &oos_cfg)?;
    let acc = AcceptanceConfig {
        eta: engine.eta,
        epsilon: engine.epsilon,
    };
    let sel_out = oos::simplest_acceptable(&oos::acceptable_set(&out.report, &acc), &path);
    let sel_in = oos::simplest_acceptable(&oos::acceptable_set(&inn.report, &acc), &path);
    let full = path.len() - 1;
    let (base_path, base_idx) = baseline_adaptive_lasso(&h_obs, &design, engine, rng::derive_seed(seed, 13))?;

    let beta = &truth.beta_star;
    let h_true = &truth.tau_star;
    let record = |method: &str, lambda: f64, m: Metrics| MethodRecord {
        replication,
        n: data.n(),
        method: method.to_string(),
        lambda,
        metrics: m,
    };
    let path_metrics = |p: &LambdaPath, a: usize| {
        let fit = &p.fits[a];
        metrics(Some(&fit.delta), &fit.predict(&design), beta, h_true)
    };
    let methods = vec![
        record(METHODS[0], path.lambdas[sel_out], path_metrics(&path, sel_out)),
        record(METHODS[1], path.lambdas[sel_in], path_metrics(&path, sel_in)),
        record(METHODS[2], 0.0, path_metrics(&path, full)),
        record(METHODS[3], base_path.lambdas[base_idx], path_metrics(&base_path, base_idx)),
        record(METHODS[4], f64::NAN, metrics(None, &hbar, beta, h_true)),
    ];
    let eps = epsilon_max(&out.report, &path, &truth.support(), &engine.eta_grid);
    Ok(ReplicationOutput {
        replication,
        seed,
        n: data.n(),
        methods,
        eta_grid: engine.eta_grid.clone(),
        epsilon_max: eps,
        min_ess: out.weights.ess.iter().copied().fold(f64::INFINITY, f64::min),
        resampled_with_replacement: out.resamples.iter().filter(|r| r.with_replacement).count(),
        rhat_sigma_eps: rhat,
    })
}

/// Seed of replication `rep` under a study seed.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    rng::derive_seed(seed, rep as u64 + 1)
}

pub fn run_replication(sim: &SimConfig, engine: &EngineConfig, rep: usize) -> Result<ReplicationOutput> {
    let seed = replication_seed(sim.seed, rep);
    let cfg = SimConfig { seed, ..*sim };
    let (data, truth) = simulate(&cfg)?;
    run_replication_on(&data, &truth, engine, rep, seed)
}

/// All replications of one configuration, in replication order.
pub fn run_study(sim: &SimConfig, engine: &EngineConfig) -> Result<Vec<ReplicationOutput>> {
    if sim.replications == 0 {
        return Err(Error::invalid("at least one replication is needed"));
    }
    (0..sim.replications)
        .into_par_iter()
        .map(|rep| run_replication(sim, engine, rep))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spread {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Spread {
    fn of(v: &[f64]) -> Self {
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        if finite.is_empty() {
            return Spread {
                q25: f64::NAN,
                median: f64::NAN,
                q75: f64::NAN,
            };
        }
        let s = linalg::sorted(&finite);
        Spread {
            q25: linalg::quantile(&s, 0.25),
            median: linalg::quantile(&s, 0.5),
            q75: linalg::quantile(&s, 0.75),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub rmse_h: Spread,
    pub rmse_beta: Spread,
    pub tpr: Spread,
    pub fpr: Spread,
    pub tnr: Spread,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySummary {
    pub n: usize,
    pub replications: usize,
    pub eta_grid: Vec<f64>,
    pub mean_epsilon_max: Vec<f64>,
    pub methods: Vec<MethodSummary>,
}

pub fn summarize_study(outputs: &[ReplicationOutput]) -> StudySummary {
    let eta_grid = outputs.first().map(|o| o.eta_grid.clone()).unwrap_or_default();
    let mean_epsilon_max = (0..eta_grid.len())
        .map(|e| linalg::mean(&outputs.iter().map(|o| o.epsilon_max[e]).collect::<Vec<_>>()))
        .collect();
    let methods = METHODS
        .iter()
        .map(|&name| {
            let recs: Vec<&Metrics> = outputs
                .iter()
                .flat_map(|o| o.methods.iter().filter(|m| m.method == name).map(|m| &m.metrics))
                .collect();
            let col = |f: fn(&Metrics) -> f64| Spread::of(&recs.iter().map(|m| f(m)).collect::<Vec<_>>());
            MethodSummary {
                method: name.to_string(),
                rmse_h: col(|m| m.rmse_h),
                rmse_beta: col(|m| m.rmse_beta),
                tpr: col(|m| m.tpr),
                fpr: col(|m| m.fpr),
                tnr: col(|m| m.tnr),
            }
        })
        .collect();
    StudySummary {
        n: outputs.first().map(|o| o.n).unwrap_or(0),
        replications: outputs.len(),
        eta_grid,
        mean_epsilon_max,
        methods,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

/// One row per replication and method.
pub fn write_metrics_csv(outputs: &[ReplicationOutput], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["replication", "n", "method", "lambda", "rmse_h", "rmse_beta", "tpr", "fpr", "tnr", "size"])
        .map_err(csv_err(path))?;
    for o in outputs {
        for m in &o.methods {
            let x = &m.metrics;
            w.write_record([
                m.replication.to_string(),
                m.n.to_string(),
                m.method.clone(),
                format!("{:?}", m.lambda),
                format!("{:?}", x.rmse_h),
                format!("{:?}", x.rmse_beta),
                format!("{:?}", x.tpr),
                format!("{:?}", x.fpr),
                format!("{:?}", x.tnr),
                x.size.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per replication and margin.
pub fn write_epsilon_csv(outputs: &[ReplicationOutput], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["replication", "n", "eta", "epsilon_max"]).map_err(csv_err(path))?;
    for o in outputs {
        for (eta, e) in o.eta_grid.iter().zip(&o.epsilon_max) {
            w.write_record([o.replication.to_string(), o.n.to_string(), format!("{eta:?}"), format!("{e:?}")])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
