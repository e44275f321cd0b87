//! Subcommand implementations. Every output is a pure function of the inputs,
//! the settings and the seed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

use targetpred::data::{self, Dataset};
use targetpred::functionals::{FunctionalDraws, FunctionalSpec, Quadrature};
use targetpred::model::{
    fit_conjugate_dataset, functional_draws, gibbs_fosr, ConjugateLinearModel, FosrModel, GibbsConfig, NoiseVariance,
    PosteriorDrawSet, PredictiveMode,
};
use targetpred::oos::{self, AcceptanceConfig, OosConfig, SirConfig};
use targetpred::rng;
use targetpred::sim::{self, EngineConfig, SimConfig};
use targetpred::solver::{self, FitResult, LambdaPath, Loss, SolverConfig, W_MAX};

use crate::config::Layers;
use crate::{EvaluateArgs, FitArgs, PathArgs, ReplicateArgs, SimulateArgs, TargetArgs};

pub const TRUTH_SCHEMA: &str = "targetpred.truth.v1";
pub const FIT_SCHEMA: &str = "targetpred.fit.v1";
pub const TARGET_SCHEMA: &str = "targetpred.target.v1";
pub const REPORT_SCHEMA: &str = "targetpred.report.v1";
pub const STUDY_SCHEMA: &str = "targetpred.study.v1";

// Labels of the streams derived from the root seed.
const SEED_MODEL: u64 = 1;
const SEED_PREDICTIVE: u64 = 2;
const SEED_EVALUATE: u64 = 3;

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("missing required setting --{name}"))
}

fn out_dir(layers: &Layers, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = required(layers.opt(flag, "out")?, "out")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    data::write_json(path, value)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn simulate(a: &SimulateArgs, layers: &Layers, seed: u64) -> Result<()> {
    let d = SimConfig::default();
    let cfg = SimConfig {
        n: layers.get(a.n, "n", d.n)?,
        p: layers.get(a.p, "p", d.p)?,
        m: layers.get(a.m, "m", d.m)?,
        rsnr: layers.get(a.rsnr, "rsnr", d.rsnr)?,
        seed,
        replications: 1,
    };
    if !cfg.rsnr.is_finite() {
        bail!("rsnr must be finite");
    }
    let dir = out_dir(layers, a.out.clone())?;
    let (dataset, truth) = sim::simulate(&cfg)?;
    let names: Vec<String> = (1..=cfg.p).map(|j| format!("x{j}")).collect();
    let manifest = dir.join("dataset.json");
    dataset.save(&manifest, &names)?;
    println!("wrote {}", manifest.display());
    #[derive(Serialize)]
    struct TruthFile<'a> {
        schema: &'static str,
        config: &'a SimConfig,
        truth: &'a sim::SimTruth,
    }
    write_json(
        &dir.join("truth.json"),
        &TruthFile {
            schema: TRUTH_SCHEMA,
            config: &cfg,
            truth: &truth,
        },
    )
}

#[derive(Debug, Serialize)]
struct FitSummary {
    schema: &'static str,
    model: &'static str,
    seed: u64,
    draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rhat_sigma_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior_mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior_sd: Option<Vec<f64>>,
}

pub fn fit(a: &FitArgs, layers: &Layers, seed: u64) -> Result<()> {
    let data_path: PathBuf = required(layers.opt(a.data.clone(), "data")?, "data")?;
    let model: String = layers.get(a.model.clone(), "model", "fosr".to_string())?;
    let (dataset, _) = Dataset::load(&data_path)?;
    let model_seed = rng::derive_seed(seed, SEED_MODEL);
    let (post, summary) = match model.as_str() {
        "fosr" => {
            let d = GibbsConfig::default();
            let burnin = layers.get(a.burnin, "burnin", d.burnin)?;
            let keep = layers.get(a.keep, "keep", d.iters - d.burnin)?;
            let fm = FosrModel::new(
                &dataset.tau,
                layers.opt(a.num_basis, "num_basis")?,
                layers.opt(a.t_dof, "t_dof")?,
            )?;
            let cfg = GibbsConfig {
                iters: burnin + keep,
                burnin,
                seed: model_seed,
            };
            let draws = gibbs_fosr(&dataset, &fm, &cfg)?;
            let summary = FitSummary {
                schema: FIT_SCHEMA,
                model: "fosr",
                seed,
                draws: draws.num_draws,
                rhat_sigma_eps: Some(draws.rhat_sigma_eps()),
                posterior_mean: None,
                posterior_sd: None,
            };
            (PosteriorDrawSet::Fosr(draws), summary)
        }
        "conjugate" => {
            let q = dataset.p() + 1;
            let precision = layers.get(a.prior_precision, "prior_precision", 1e-4)?;
            let noise = match layers.opt(a.noise_variance, "noise_variance")? {
                Some(value) => NoiseVariance::Known { value },
                None => NoiseVariance::InverseGamma {
                    a0: layers.get(a.a0, "a0", 0.01)?,
                    b0: layers.get(a.b0, "b0", 0.01)?,
                },
            };
            let cm = ConjugateLinearModel {
                prior_precision: DMatrix::identity(q, q) * precision,
                noise,
            };
            let posterior = fit_conjugate_dataset(&dataset, &cm)?;
            let s = layers.get(a.draws, "draws", 1000)?;
            let draws = posterior.sample(s, model_seed)?;
            let summary = FitSummary {
                schema: FIT_SCHEMA,
                model: "conjugate",
                seed,
                draws: s,
                rhat_sigma_eps: None,
                posterior_mean: Some(posterior.mean.as_slice().to_vec()),
                posterior_sd: Some(posterior.covariance.diagonal().iter().map(|v| v.sqrt()).collect()),
            };
            (PosteriorDrawSet::Conjugate(draws), summary)
        }
        other => bail!("unknown model `{other}` (expected fosr or conjugate)"),
    };
    post.validate().context("posterior draws failed validation")?;
    let dir = out_dir(layers, a.out.clone())?;
    let archive = dir.join("draws.json");
    post.save(&archive)?;
    println!("wrote {}", archive.display());
    write_json(&dir.join("fit_summary.json"), &summary)
}

/// A functional given as a kind name, inline JSON, a JSON file or a contrast CSV.
pub fn parse_functional(text: &str) -> Result<FunctionalSpec> {
    let t = text.trim();
    let value: Value = if t.starts_with('{') {
        serde_json::from_str(t).context("parsing functional JSON")?
    } else if t.ends_with(".csv") {
        return Ok(FunctionalSpec::contrast_from_csv(Path::new(t))?);
    } else if t.ends_with(".json") {
        let raw = fs::read_to_string(t).with_context(|| format!("reading functional {t}"))?;
        serde_json::from_str(&raw).with_context(|| format!("parsing functional {t}"))?
    } else {
        serde_json::json!({ "kind": t })
    };
    serde_json::from_value(value).map_err(|e| anyhow!("invalid functional {t:?}: {e}"))
}

fn functional_setting(layers: &Layers, flag: Option<String>) -> Result<FunctionalSpec> {
    if let Some(s) = flag {
        return parse_functional(&s);
    }
    match layers.opt::<Value>(None, "functional")? {
        Some(Value::String(s)) => parse_functional(&s),
        Some(v) => serde_json::from_value(v).map_err(|e| anyhow!("invalid functional in config: {e}")),
        None => bail!("missing required setting --functional"),
    }
}

fn parse_mode(s: &str) -> Result<PredictiveMode> {
    match s {
        "replicate" => Ok(PredictiveMode::Replicate),
        "new_subject" => Ok(PredictiveMode::NewSubject),
        other => bail!("unknown predictive mode `{other}` (expected replicate or new_subject)"),
    }
}

/// Inputs and settings shared by `target` and `evaluate`.
struct Pipeline {
    dataset: Dataset,
    design: DMatrix<f64>,
    post: PosteriorDrawSet,
    mode: PredictiveMode,
    n_lambda: usize,
    ratio: f64,
    w_max: f64,
    solver: SolverConfig,
    seed: u64,
}

impl Pipeline {
    fn load(a: &PathArgs, layers: &Layers, seed: u64) -> Result<Self> {
        let data_path: PathBuf = required(layers.opt(a.data.clone(), "data")?, "data")?;
        let draws_path: PathBuf = required(layers.opt(a.draws.clone(), "draws")?, "draws")?;
        let (dataset, _) = Dataset::load(&data_path)?;
        let post = PosteriorDrawSet::load(&draws_path)?;
        if post.design_dim() != dataset.p() + 1 {
            bail!(
                "draw archive expects {} design columns but the dataset has {}",
                post.design_dim(),
                dataset.p() + 1
            );
        }
        if post.curve_len() != dataset.m() {
            bail!("draw archive curves have length {} but the dataset has {}", post.curve_len(), dataset.m());
        }
        let d = SolverConfig::default();
        Ok(Pipeline {
            design: dataset.design(),
            dataset,
            post,
            mode: parse_mode(&layers.get(a.mode.clone(), "mode", "replicate".to_string())?)?,
            n_lambda: layers.get(a.n_lambda, "n_lambda", 100)?,
            ratio: layers.get(a.ratio, "ratio", 1e-4)?,
            w_max: layers.get(a.w_max, "w_max", W_MAX)?,
            solver: SolverConfig {
                tol: layers.get(a.tol, "tol", d.tol)?,
                max_iters: layers.get(a.max_iters, "max_iters", d.max_iters)?,
            },
            seed,
        })
    }

    fn draws(&self, spec: &FunctionalSpec) -> Result<FunctionalDraws> {
        let seed = rng::derive_seed(self.seed, SEED_PREDICTIVE);
        Ok(functional_draws(&self.post, &self.design, self.mode, seed, spec, &self.dataset.tau)?)
    }

    /// Adaptive weights and the action path of one scalar component.
    fn path(&self, h_draws: &DMatrix<f64>, loss: Loss) -> Result<(Vec<f64>, Vec<f64>, LambdaPath)> {
        let hbar = solver::solve_unrestricted(&FunctionalDraws::from_matrix(h_draws));
        let omega = solver::adaptive_weights(h_draws, &self.design, self.w_max)?;
        let path = solver::lambda_path(&hbar, &self.design, &omega, self.n_lambda, self.ratio, loss, &self.solver)?;
        Ok((hbar, omega, path))
    }
}

#[derive(Debug, Serialize)]
struct TargetFile<'a> {
    schema: &'static str,
    functional: &'a FunctionalSpec,
    component: usize,
    loss: Loss,
    hbar: &'a [f64],
    weights: &'a [f64],
    path: &'a LambdaPath,
}

pub fn target(a: &TargetArgs, layers: &Layers, seed: u64) -> Result<()> {
    let specs: Vec<FunctionalSpec> = if a.functionals.is_empty() {
        match layers.opt::<Vec<Value>>(None, "functionals")? {
            Some(list) => list
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => parse_functional(&s),
                    v => serde_json::from_value(v).map_err(|e| anyhow!("invalid functional in config: {e}")),
                })
                .collect::<Result<_>>()?,
            None => vec![functional_setting(layers, None)?],
        }
    } else {
        a.functionals.iter().map(|s| parse_functional(s)).collect::<Result<_>>()?
    };
    let pipe = Pipeline::load(&a.common, layers, seed)?;
    let dir = out_dir(layers, a.common.out.clone())?;
    for (idx, spec) in specs.iter().enumerate() {
        let fd = pipe.draws(spec)?;
        let loss = oos::loss_for(spec.is_binary());
        for c in 0..fd.dim {
            let (hbar, omega, path) = pipe.path(&fd.component(c), loss)?;
            let name = if fd.dim == 1 {
                format!("target_{idx}_{}.json", spec.kind())
            } else {
                format!("target_{idx}_{}_{c}.json", spec.kind())
            };
            write_json(
                &dir.join(name),
                &TargetFile {
                    schema: TARGET_SCHEMA,
                    functional: spec,
                    component: c,
                    loss,
                    hbar: &hbar,
                    weights: &omega,
                    path: &path,
                },
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SelectedAction<'a> {
    index: usize,
    lambda: f64,
    active_set: &'a [usize],
    delta: &'a [f64],
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    schema: &'static str,
    functional: &'a FunctionalSpec,
    component: usize,
    in_sample: bool,
    folds: usize,
    resample: usize,
    truncate: bool,
    ess: &'a [f64],
    truncated: &'a [usize],
    resampled_with_replacement: Vec<bool>,
    selected: SelectedAction<'a>,
    summary: oos::ReportSummary,
}

pub fn evaluate(a: &EvaluateArgs, layers: &Layers, seed: u64) -> Result<()> {
    let spec = functional_setting(layers, a.functional.clone())?;
    let acc = AcceptanceConfig {
        eta: layers.get(a.eta, "eta", 0.0)?,
        epsilon: layers.get(a.epsilon, "epsilon", 0.1)?,
    };
    acc.validate()?;
    let pipe = Pipeline::load(&a.common, layers, seed)?;
    let fd = pipe.draws(&spec)?;
    let component = layers.get(a.component, "component", 0)?;
    if component >= fd.dim {
        bail!("component {component} out of range for a functional with {} outputs", fd.dim);
    }
    let h_draws = fd.component(component);
    let loss = oos::loss_for(spec.is_binary());
    let (_, _, path) = pipe.path(&h_draws, loss)?;

    let quad = Quadrature::new(&pipe.dataset.tau)?;
    let h_obs: Vec<f64> = (0..pipe.dataset.n())
        .map(|i| quad.apply(&spec, &pipe.dataset.curve(i)).map(|v| v.as_slice()[component]))
        .collect::<targetpred::Result<_>>()?;

    let s = pipe.post.num_draws();
    let cfg = OosConfig {
        k: layers.get(a.folds, "folds", 10)?,
        sir: SirConfig {
            r: layers.get(a.resample, "resample", (s / 10).max(1))?,
            max_fraction: Some(0.1),
        },
        truncate: !layers.switch(a.no_truncate, "no_truncate")?,
        seed: rng::derive_seed(seed, SEED_EVALUATE),
    };
    let in_sample = layers.switch(a.in_sample, "in_sample")?;
    let result = if in_sample {
        oos::evaluate_in_sample(&h_draws, &h_obs, &pipe.design, &path, &cfg)?
    } else {
        let log_lik = pipe.post.log_lik_matrix(&pipe.dataset)?;
        oos::evaluate_out_of_sample(&log_lik, &h_draws, &h_obs, &pipe.design, &path, &cfg, &pipe.solver)?
    };
    let summary = oos::summarize(&result.report, &acc, &path);
    let chosen: &FitResult = &path.fits[summary.selected_index];
    let dir = out_dir(layers, a.common.out.clone())?;
    let table = dir.join("loss_table.csv");
    oos::write_table_csv(&result.report, &acc, &table)?;
    println!("wrote {}", table.display());
    write_json(
        &dir.join("report.json"),
        &ReportFile {
            schema: REPORT_SCHEMA,
            functional: &spec,
            component,
            in_sample,
            folds: cfg.k,
            resample: cfg.sir.r,
            truncate: cfg.truncate,
            ess: &result.weights.ess,
            truncated: &result.weights.truncated,
            resampled_with_replacement: result.resamples.iter().map(|r| r.with_replacement).collect(),
            selected: SelectedAction {
                index: summary.selected_index,
                lambda: chosen.lambda,
                active_set: &chosen.active_set,
                delta: &chosen.delta,
            },
            summary,
        },
    )
}

pub fn replicate(a: &ReplicateArgs, layers: &Layers, seed: u64) -> Result<()> {
    let d = SimConfig::default();
    let sim_cfg = SimConfig {
        n: layers.get(a.n, "n", d.n)?,
        p: layers.get(a.p, "p", d.p)?,
        m: layers.get(a.m, "m", d.m)?,
        rsnr: layers.get(a.rsnr, "rsnr", d.rsnr)?,
        seed,
        replications: layers.get(a.replications, "replications", d.replications)?,
    };
    let e = EngineConfig::default();
    let engine = EngineConfig {
        burnin: layers.get(a.burnin, "burnin", e.burnin)?,
        keep: layers.get(a.keep, "keep", e.keep)?,
        folds: layers.get(a.folds, "folds", e.folds)?,
        resample: layers.opt(a.resample, "resample")?,
        n_lambda: layers.get(a.n_lambda, "n_lambda", e.n_lambda)?,
        lambda_ratio: layers.get(a.ratio, "ratio", e.lambda_ratio)?,
        eta: layers.get(a.eta, "eta", e.eta)?,
        epsilon: layers.get(a.epsilon, "epsilon", e.epsilon)?,
        ..e
    };
    AcceptanceConfig {
        eta: engine.eta,
        epsilon: engine.epsilon,
    }
    .validate()?;
    let dir = out_dir(layers, a.out.clone())?;
    let outputs = sim::run_study(&sim_cfg, &engine)?;
    let metrics = dir.join("metrics.csv");
    sim::write_metrics_csv(&outputs, &metrics)?;
    println!("wrote {}", metrics.display());
    let eps = dir.join("epsilon_max.csv");
    sim::write_epsilon_csv(&outputs, &eps)?;
    println!("wrote {}", eps.display());
    #[derive(Serialize)]
    struct StudyFile<'a> {
        schema: &'static str,
        sim: &'a SimConfig,
        engine: &'a EngineConfig,
        summary: sim::StudySummary,
        replications: &'a [sim::ReplicationOutput],
    }
    write_json(
        &dir.join("study.json"),
        &StudyFile {
            schema: STUDY_SCHEMA,
            sim: &sim_cfg,
            engine: &engine,
            summary: sim::summarize_study(&outputs),
            replications: &outputs,
        },
    )
}

