//! Acceptance checks: one pass/fail line per primary criterion.
//!
//! Lines are written straight to the stdout handle so they appear in the
//! test log even when output capture is on.

mod common;

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use targetpred::functionals::{FunctionalDraws, FunctionalSpec};
use targetpred::model::{
    fit_conjugate, functional_draws, gibbs_fosr, hbar as model_hbar, predictive_draws, star_round, star_transform, star_transform_inv,
    ConjugateLinearModel, FosrModel, GibbsConfig, NoiseVariance, PosteriorDrawSet, PredictiveMode,
};
use targetpred::oos::{
    acceptable_by_quantile, acceptable_set, evaluate_in_sample, evaluate_out_of_sample, hbar_train, importance_weights,
    make_folds, sir_resample, AcceptanceConfig, ActionLoss, LossReport, OosConfig, SirConfig,
};
use targetpred::sim::{run_study, simulate, summarize_study, EngineConfig, SimConfig};
use targetpred::solver::{
    adaptive_weights, lambda_path, soft_threshold, solve_penalized, solve_unrestricted, ActionSpec, Loss, SolverConfig,
    W_MAX,
};

use common::*;

fn verdict(name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[{tag}] {name}: {detail}").unwrap();
    out.flush().unwrap();
}

/// Minimizes `f` over nested tensor grids of 11 points per coordinate,
/// recentring on boundary hits and halving the step otherwise.
fn zoom_minimize(f: &dyn Fn(&[f64]) -> f64, d: usize, half_width: f64, final_step: f64) -> Vec<f64> {
    let mut center = vec![0.0; d];
    let mut step = half_width / 5.0;
    let total = 11usize.pow(d as u32);
    let mut point = vec![0.0; d];
    let mut recentres = 0;
    loop {
        let mut best = (f64::INFINITY, vec![0usize; d]);
        for code in 0..total {
            let mut c = code;
            let mut idx = vec![0usize; d];
            for k in 0..d {
                idx[k] = c % 11;
                c /= 11;
                point[k] = center[k] + step * (idx[k] as f64 - 5.0);
            }
            let v = f(&point);
            if v < best.0 {
                best = (v, idx);
            }
        }
        let on_edge = best.1.iter().any(|&k| k == 0 || k == 10);
        for k in 0..d {
            center[k] += step * (best.1[k] as f64 - 5.0);
        }
        if on_edge && recentres < 200 {
            recentres += 1;
            continue;
        }
        if step <= final_step {
            return center;
        }
        step /= 2.0;
    }
}

#[test]
fn theorem_1_expected_loss_minimizer() {
    let start = Instant::now();
    let mut r = gen(1001);
    let s = 2000;
    let (mut worst, mut worst_expansion, mut fits) = (0.0f64, 0.0f64, 0);
    for _ in 0..25 {
        let n = r.random_range(6..=15);
        let p = r.random_range(1..=3);
        let x = design(n, p, &mut r);
        let b: Vec<f64> = (0..=p).map(|_| normal(&mut r)).collect();
        let mu: Vec<f64> = (0..n).map(|i| (0..=p).map(|j| x[(i, j)] * b[j]).sum::<f64>() + 0.3 * normal(&mut r)).collect();
        let sd: Vec<f64> = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
        let h = DMatrix::from_fn(s, n, |_, i| mu[i] + sd[i] * normal(&mut r));
        let w: Vec<f64> = (0..p).map(|_| r.random_range(0.5..2.0)).collect();

        // Draw-level sums of the Monte-Carlo loss (1/(S n)) sum_s sum_i (h_is - x_i d)^2.
        let d = p + 1;
        let scale = 1.0 / (s * n) as f64;
        let mut a0 = 0.0;
        let mut bx = vec![0.0; d];
        for k in 0..s {
            for i in 0..n {
                a0 += h[(k, i)] * h[(k, i)] * scale;
                for j in 0..d {
                    bx[j] += h[(k, i)] * x[(i, j)] * scale;
                }
            }
        }
        let g = x.transpose() * &x / n as f64;
        let quad = |delta: &[f64]| {
            let mut v = a0;
            for j in 0..d {
                v -= 2.0 * bx[j] * delta[j];
                for l in 0..d {
                    v += delta[j] * g[(j, l)] * delta[l];
                }
            }
            v
        };
        for _ in 0..3 {
            let delta: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
            let mut direct = 0.0;
            for k in 0..s {
                for i in 0..n {
                    let pred: f64 = (0..d).map(|j| x[(i, j)] * delta[j]).sum();
                    direct += (h[(k, i)] - pred).powi(2);
                }
            }
            direct *= scale;
            worst_expansion = worst_expansion.max((direct - quad(&delta)).abs() / direct);
        }

        let hbar = FunctionalDraws::from_matrix(&h).hbar();
        for lambda in [0.0, 0.1, 1.0] {
            let loss = |delta: &[f64]| quad(delta) + lambda * (1..d).map(|j| w[j - 1] * delta[j].abs()).sum::<f64>();
            let grid = zoom_minimize(&loss, d, 5.0, 1e-4);
            let fit = solve_penalized(&hbar, &x, &ActionSpec::adaptive_l1(lambda, w.clone(), Loss::Squared)).unwrap();
            worst = worst.max(max_abs_diff(&grid, &fit.delta));
            fits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-3 && worst_expansion < 1e-10 && secs < 60.0;
    verdict(
        "Theorem 1 equivalence",
        pass,
        format!("{fits} fits on 25 instances, max |grid - solver| = {worst:.2e} (tol 1e-3), loss expansion rel err {worst_expansion:.1e}, {secs:.1} s (limit 60 s)"),
    );
    assert!(pass);
}

#[test]
fn corollary_1_unrestricted_action_is_the_predictive_mean() {
    let mut instances = 0;
    let mut mismatches = 0;
    let mut check = |fd: &FunctionalDraws, via_model: Option<Vec<f64>>| {
        let m = fd.matrix();
        let (s, n) = m.shape();
        let mut mean = vec![0.0; n];
        for k in 0..s {
            for i in 0..n {
                mean[i] += m[(k, i)];
            }
        }
        mean.iter_mut().for_each(|v| *v /= s as f64);
        let got = solve_unrestricted(fd);
        let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        let mut ok = same(&got, &mean) && same(&got, &fd.hbar());
        if let Some(h) = via_model {
            ok &= same(&got, &h);
        }
        instances += 1;
        mismatches += (!ok) as usize;
    };

    let mut r = gen(1002);
    for k in 0..10 {
        let m = DMatrix::from_fn(50 + 37 * k, 3 + k, |_, _| 10f64.powi(k as i32 - 5) * normal(&mut r));
        check(&FunctionalDraws::from_matrix(&m), None);
    }
    for seed in 0..5 {
        let mut r = gen(1100 + seed);
        let (data, _) = scalar_dataset(25, 3, 0.8, &mut r);
        let (_, post) = conjugate_posterior(&data, 0.64, 0.1);
        let draws = PosteriorDrawSet::Conjugate(post.sample(500, seed).unwrap());
        let x = data.design();
        let preds = predictive_draws(&draws, &x, PredictiveMode::Replicate, seed).unwrap();
        let fd = functional_draws(&draws, &x, PredictiveMode::Replicate, seed, &FunctionalSpec::Avg, &data.tau).unwrap();
        check(&fd, Some(model_hbar(&FunctionalSpec::Avg, &preds, &data.tau).unwrap()));
    }
    let (data, _) = simulate(&SimConfig { n: 20, p: 6, m: 25, rsnr: 5.0, seed: 7, replications: 1 }).unwrap();
    let model = FosrModel::new(&data.tau, None, None).unwrap();
    let draws = PosteriorDrawSet::Fosr(gibbs_fosr(&data, &model, &GibbsConfig { iters: 300, burnin: 100, seed: 3 }).unwrap());
    let x = data.design();
    for spec in [FunctionalSpec::Argmax, FunctionalSpec::Max, FunctionalSpec::Sd, FunctionalSpec::ZerosWindow { lo: 0.0, hi: 0.2 }] {
        for mode in [PredictiveMode::Replicate, PredictiveMode::NewSubject] {
            let preds = predictive_draws(&draws, &x, mode, 5).unwrap();
            let fd = functional_draws(&draws, &x, mode, 5, &spec, &data.tau).unwrap();
            check(&fd, Some(model_hbar(&spec, &preds, &data.tau).unwrap()));
        }
    }
    let pass = mismatches == 0;
    verdict(
        "Corollary 1 (unrestricted action = predictive mean)",
        pass,
        format!("{mismatches} bitwise mismatches over {instances} instances (tol: exact)"),
    );
    assert!(pass);
}

#[test]
fn corollary_2_point_predictor_is_the_posterior_mean() {
    let mut closed = 0.0f64;
    let mut mc = 0.0f64;
    let mut cases = 0;
    for seed in 0..10u64 {
        let mut r = gen(1200 + seed);
        let n = 20 + 5 * seed as usize;
        let p = 1 + (seed as usize % 5);
        let (data, _) = scalar_dataset(n, p, 0.5, &mut r);
        let x = data.design();
        let y = DVector::from_column_slice(data.y.column(0).as_slice());
        let q = p + 1;
        let noise = if seed % 2 == 0 {
            NoiseVariance::Known { value: 0.25 }
        } else {
            NoiseVariance::InverseGamma { a0: 2.0, b0: 1.0 }
        };
        let model = ConjugateLinearModel { prior_precision: DMatrix::identity(q, q) * 0.05, noise };
        let post = fit_conjugate(&x, &y, &model).unwrap();
        let spec = ActionSpec::unpenalized(p, Loss::Squared);

        // Exact predictive means on the observed design.
        let hbar: Vec<f64> = (0..n)
            .map(|i| post.predictive_mean(&x.row(i).iter().copied().collect::<Vec<_>>()))
            .collect();
        let fit = solve_penalized(&hbar, &x, &spec).unwrap();
        closed = closed.max(max_abs_diff(&fit.delta, post.mean.as_slice()));

        // Noise-free predictive draws: the fit must equal the mean of the coefficient draws.
        let mut draws = post.sample(2000, seed).unwrap();
        draws.sigma2.fill(0.0);
        let beta_mean = column_means(&draws.beta);
        let set = PosteriorDrawSet::Conjugate(draws);
        let identity = FunctionalSpec::Contrast { matrix: DMatrix::identity(1, 1) };
        let fd = functional_draws(&set, &x, PredictiveMode::Replicate, seed, &identity, &data.tau).unwrap();
        let fit = solve_penalized(&solve_unrestricted(&fd), &x, &spec).unwrap();
        mc = mc.max(max_abs_diff(&fit.delta, &beta_mean));
        cases += 1;
    }
    let pass = closed <= 1e-6 && mc <= 1e-6;
    verdict(
        "Corollary 2 (lambda = 0 point predictor = posterior mean)",
        pass,
        format!("{cases} models, max |delta - E theta| = {closed:.2e} (closed form), {mc:.2e} (draw mean) (tol 1e-6)"),
    );
    assert!(pass);
}

#[test]
fn solver_correctness() {
    let mut r = gen(1300);
    let mut kkt = 0.0f64;
    let mut path_fits = 0;
    for _ in 0..10 {
        let n = r.random_range(30..=80);
        let p = r.random_range(3..=10);
        let x = design(n, p, &mut r);
        let h: Vec<f64> = (0..n).map(|i| x[(i, 1)] - 0.5 * x[(i, 2)] + normal(&mut r)).collect();
        let w: Vec<f64> = (0..p).map(|_| r.random_range(0.2..3.0)).collect();
        let path = lambda_path(&h, &x, &w, 100, 1e-4, Loss::Squared, &SolverConfig::default()).unwrap();
        for fit in &path.fits {
            kkt = kkt.max(kkt_violation(&h, &x, &fit.delta, fit.lambda, &w, Loss::Squared)).max(fit.kkt_residual);
            path_fits += 1;
        }
    }

    let x = hadamard8();
    let mut soft = 0.0f64;
    for _ in 0..20 {
        let h: Vec<f64> = (0..8).map(|_| 2.0 * normal(&mut r)).collect();
        let w: Vec<f64> = (0..7).map(|_| r.random_range(0.1..3.0)).collect();
        let lambda = r.random_range(0.0..2.0);
        let fit = solve_penalized(&h, &x, &ActionSpec::adaptive_l1(lambda, w.clone(), Loss::Squared)).unwrap();
        for j in 0..8 {
            let z: f64 = (0..8).map(|i| x[(i, j)] * h[i]).sum::<f64>() / 8.0;
            let expect = if j == 0 { z } else { soft_threshold(z, lambda * w[j - 1] / 2.0) };
            soft = soft.max((fit.delta[j] - expect).abs());
        }
    }

    let mut gap = 0.0f64;
    for lambda in [0.0, 0.05, 0.3] {
        let n = 25;
        let x = design(n, 2, &mut r);
        let h: Vec<f64> = (0..n).map(|i| 0.3 + 1.2 * x[(i, 1)] - 0.7 * x[(i, 2)] + 0.5 * normal(&mut r)).collect();
        let w = [1.0, 0.6];
        let fit = solve_penalized(&h, &x, &ActionSpec::adaptive_l1(lambda, w.to_vec(), Loss::Squared)).unwrap();
        let solver_obj = objective(&h, &x, &fit.delta, lambda, &w);
        // Intercept profiled out: centred second moments.
        let cm = |j: usize| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        let hm = h.iter().sum::<f64>() / n as f64;
        let u: Vec<[f64; 3]> = (0..n).map(|i| [x[(i, 1)] - cm(1), x[(i, 2)] - cm(2), h[i] - hm]).collect();
        let c = |a: usize, b: usize| u.iter().map(|v| v[a] * v[b]).sum::<f64>() / n as f64;
        let (s11, s22, s12, s1h, s2h, shh) = (c(0, 0), c(1, 1), c(0, 1), c(0, 2), c(1, 2), c(2, 2));
        let mut best = f64::INFINITY;
        for a in 0..=6000 {
            let d1 = -3.0 + a as f64 * 1e-3;
            for b in 0..=6000 {
                let d2 = -3.0 + b as f64 * 1e-3;
                let f = shh - 2.0 * (d1 * s1h + d2 * s2h) + d1 * d1 * s11 + d2 * d2 * s22 + 2.0 * d1 * d2 * s12
                    + lambda * (w[0] * d1.abs() + w[1] * d2.abs());
                best = best.min(f);
            }
        }
        assert!(solver_obj <= best + 1e-12, "solver objective above the grid minimum");
        gap = gap.max(best - solver_obj);
    }
    let pass = kkt <= 1e-7 && soft <= 1e-8 && gap <= 1e-5;
    verdict(
        "Solver correctness",
        pass,
        format!(
            "max KKT residual {kkt:.2e} over {path_fits} path fits (tol 1e-7); soft-threshold err {soft:.2e} (tol 1e-8); p=2 grid gap {gap:.2e} (tol 1e-5)"
        ),
    );
    assert!(pass);
}

/// Importance and SIR estimates of a held-out predictive mean against the
/// closed-form training posterior; returns whether both are within 3 SE.
fn sir_trial(trial: u64, truncate: bool) -> (bool, bool) {
    let (n, k, s, r_count) = (30, 3, 10_000, 1000);
    let mut r = gen(1400 + trial);
    let (data, _) = scalar_dataset(n, 3, 1.0, &mut r);
    let (_, post) = conjugate_posterior(&data, 1.0, 1e-2);
    let draws = PosteriorDrawSet::Conjugate(post.sample(s, trial).unwrap());
    let x = data.design();
    let identity = FunctionalSpec::Contrast { matrix: DMatrix::identity(1, 1) };
    let func = functional_draws(&draws, &x, PredictiveMode::Replicate, trial + 1, &identity, &data.tau).unwrap().matrix();
    let log_lik = draws.log_lik_matrix(&data).unwrap();
    let plan = make_folds(n, k, trial).unwrap();
    let fw = importance_weights(&log_lik, &plan, truncate).unwrap();
    let res = sir_resample(&fw, &SirConfig { r: r_count, max_fraction: Some(0.1) }, trial + 2).unwrap();

    let fold = 0;
    let i = plan.validation_rows(fold)[0];
    let row: Vec<f64> = x.row(i).iter().copied().collect();
    let (_, train) = conjugate_posterior(&data.subset(&plan.training_rows(fold)), 1.0, 1e-2);
    let target = train.predictive_mean(&row);
    let PosteriorDrawSet::Conjugate(d) = &draws else { unreachable!() };

    let w = &fw.weights[fold];
    let v: Vec<f64> = (0..s).map(|k| d.mean_at(k, &row)).collect();
    let est: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
    let se_is = w.iter().zip(&v).map(|(a, b)| a * a * (b - est).powi(2)).sum::<f64>().sqrt();
    let is_ok = (est - target).abs() <= 3.0 * se_is;

    // The resampled draws carry predictive noise, so the importance error of
    // the weighted draw set is measured on the draws themselves.
    let y: Vec<f64> = func.column(i).iter().copied().collect();
    let y_est: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
    let se_y = w.iter().zip(&y).map(|(a, b)| a * a * (b - y_est).powi(2)).sum::<f64>().sqrt();
    let idx = &res[fold].indices;
    let sir_mean = idx.iter().map(|&k| func[(k, i)]).sum::<f64>() / idx.len() as f64;
    let se_sir = (train.predictive_variance(&row) / r_count as f64 + se_y * se_y).sqrt();
    let sir_ok = (sir_mean - target).abs() <= 3.0 * se_sir;
    (is_ok, sir_ok)
}

#[test]
fn sir_importance_fidelity() {
    let start = Instant::now();
    let trials = 100;
    let (mut is_pass, mut sir_pass, mut both) = (0, 0, 0);
    for t in 0..trials {
        let (a, b) = sir_trial(t, false);
        is_pass += a as usize;
        sir_pass += b as usize;
        both += (a && b) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = is_pass >= 95 && sir_pass >= 95 && secs < 120.0;
    verdict(
        "SIR/importance fidelity",
        pass,
        format!(
            "importance mean within 3 SE in {is_pass}/{trials}, SIR predictive mean in {sir_pass}/{trials} (both {both}) (need >= 95 each), untruncated weights, {secs:.1} s (limit 120 s)"
        ),
    );
    assert!(pass);
}

fn random_report(r: &mut targetpred::rng::StreamRng) -> LossReport {
    let a = r.random_range(2..8);
    let rr = r.random_range(1..15);
    let palette = [0.0, 1.0, 1.0, 2.0, 0.5];
    let actions = (0..a)
        .map(|k| {
            let predictive = (0..rr)
                .map(|_| if r.random_bool(0.4) { palette[r.random_range(0..palette.len())] } else { r.random_range(0.0..3.0) })
                .collect();
            let empirical = if r.random_bool(0.3) { 1.0 } else { r.random_range(0.5..2.0) };
            ActionLoss { lambda: 1.0 / (k + 1) as f64, active_set_size: a - k, empirical, predictive }
        })
        .collect();
    LossReport::new(actions).unwrap()
}

fn pipeline_reports(seed: u64) -> Vec<LossReport> {
    let mut r = gen(1500 + seed);
    let (data, _) = scalar_dataset(40, 6, 1.0, &mut r);
    let (_, post) = conjugate_posterior(&data, 1.0, 1e-2);
    let draws = PosteriorDrawSet::Conjugate(post.sample(3000, seed).unwrap());
    let x = data.design();
    let func = functional_draws(&draws, &x, PredictiveMode::Replicate, seed, &FunctionalSpec::Avg, &data.tau).unwrap();
    let h = func.matrix();
    let w = adaptive_weights(&h, &x, W_MAX).unwrap();
    let path = lambda_path(&func.hbar(), &x, &w, 30, 1e-3, Loss::Squared, &SolverConfig::default()).unwrap();
    let h_obs: Vec<f64> = data.y.column(0).iter().copied().collect();
    let cfg = OosConfig { k: 5, sir: SirConfig { r: 300, max_fraction: Some(0.1) }, truncate: true, seed };
    let log_lik = draws.log_lik_matrix(&data).unwrap();
    let out = evaluate_out_of_sample(&log_lik, &h, &h_obs, &x, &path, &cfg, &SolverConfig::default()).unwrap();
    let inn = evaluate_in_sample(&h, &h_obs, &x, &path, &cfg).unwrap();
    vec![out.report, inn.report]
}

#[test]
fn lemma_1_duality() {
    let mut r = gen(1600);
    let mut corpus: Vec<LossReport> = (0..500).map(|_| random_report(&mut r)).collect();
    for seed in 0..3 {
        corpus.extend(pipeline_reports(seed));
    }
    let mut checks = 0;
    let mut disagreements = 0;
    for rep in &corpus {
        let rr = rep.num_draws();
        // Margins at every realized percent increase probe the strict inequality.
        let mut etas = vec![0.0, 0.5, 1.0, 5.0, 20.0, 100.0, f64::INFINITY];
        for a in 0..rep.actions.len() {
            etas.extend(rep.percent_increase_draws(a).into_iter().filter(|v| v.is_finite() && *v >= 0.0).take(5));
        }
        let mut epss: Vec<f64> = vec![0.0, 0.05, 0.1, 0.25, 0.5, 0.9, 1.0];
        let stride = (rr / 40).max(1);
        epss.extend((0..=rr).step_by(stride).map(|k| k as f64 / rr as f64));
        for &eta in &etas {
            for &eps in &epss {
                let cfg = AcceptanceConfig { eta, epsilon: eps };
                checks += 1;
                if acceptable_set(rep, &cfg).members != acceptable_by_quantile(rep, &cfg) {
                    disagreements += 1;
                }
            }
        }
    }
    let pass = disagreements == 0;
    verdict(
        "Lemma 1 duality",
        pass,
        format!("{disagreements} disagreements in {checks} (report, eta, epsilon) checks over {} reports (tol: exact)", corpus.len()),
    );
    assert!(pass);
}

#[test]
fn simulation_study_reproduction() {
    let start = Instant::now();
    let targets = [(75, 0.21), (100, 0.39), (500, 0.54)];
    let engine = EngineConfig::default();
    let mut eps = Vec::new();
    let mut ordering = Vec::new();
    let mut lines = Vec::new();
    for &(n, target) in &targets {
        let sim = SimConfig { n, p: 50, m: 200, rsnr: 5.0, seed: 42, replications: 50 };
        let outs = run_study(&sim, &engine).unwrap();
        let summary = summarize_study(&outs);
        let e0 = summary.mean_epsilon_max[0];
        eps.push(e0);
        let med = |name: &str| summary.methods.iter().find(|m| m.method == name).unwrap().rmse_h.median;
        let (po, al, bayes) = (med("proposed_out"), med("adaptive_lasso"), med("bayes"));
        if n >= 100 {
            ordering.push(po < al && al < bayes);
        }
        lines.push(format!(
            "n={n}: eps_max(0)={e0:.3} (target {target:.2} +/- 0.12), median RMSE(h) out {po:.4} / adaptive-l1 {al:.4} / bayes {bayes:.4}"
        ));
    }
    let within = eps.iter().zip(&targets).all(|(e, (_, t))| (e - t).abs() <= 0.12);
    let monotone = eps.windows(2).all(|w| w[0] <= w[1]);
    let ordered = ordering.iter().all(|b| *b);
    let pass = within && monotone && ordered;
    verdict(
        "Simulation study reproduction",
        pass,
        format!(
            "50 reps each, seed 42; {}; nondecreasing={monotone}, RMSE ordering at n=100,500 holds={ordered}; {:.0} s",
            lines.join("; "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn count_transform_round_trip() {
    let mut worst = 0.0f64;
    let mut worst_inv = 0.0f64;
    let mut r = gen(1700);
    let mut ts: Vec<f64> = (0..=10_000).map(|k| k as f64).collect();
    ts.extend((0..10_000).map(|_| r.random_range(0.0..1e4)));
    ts.extend([1e-12, 1e-6, 0.25, 0.5]);
    for &t in &ts {
        let back = star_transform_inv(star_transform(t).unwrap()).unwrap();
        worst = worst.max((back - t).abs());
    }
    for k in 0..10_000 {
        let u = -2.0 + k as f64 * 0.02;
        let back = star_transform(star_transform_inv(u).unwrap()).unwrap();
        worst_inv = worst_inv.max((back - u).abs());
    }
    let counts_ok = (0..=10_000u64).all(|c| star_round(c as f64 + 0.5) == c) && star_round(-0.5) == 0;
    let pass = worst <= 1e-9 && worst_inv <= 1e-9 && counts_ok;
    verdict(
        "Count-transform round trip (substitute for the real-data results)",
        pass,
        format!("max |inv(g(t)) - t| = {worst:.2e}, max |g(inv(u)) - u| = {worst_inv:.2e} (tol 1e-9); rounding floors counts: {counts_ok}"),
    );
    assert!(pass);
}

#[test]
fn importance_means_track_training_posteriors_across_folds() {
    // Companion to the SIR criterion: every fold of one well-powered instance.
    let mut r = gen(1800);
    let (data, _) = scalar_dataset(30, 3, 1.0, &mut r);
    let (_, post) = conjugate_posterior(&data, 1.0, 1e-2);
    let draws = PosteriorDrawSet::Conjugate(post.sample(20_000, 1).unwrap());
    let x = data.design();
    let identity = FunctionalSpec::Contrast { matrix: DMatrix::identity(1, 1) };
    let func = functional_draws(&draws, &x, PredictiveMode::Replicate, 2, &identity, &data.tau).unwrap().matrix();
    let plan = make_folds(30, 3, 3).unwrap();
    let fw = importance_weights(&draws.log_lik_matrix(&data).unwrap(), &plan, false).unwrap();
    let means = hbar_train(&func, &fw).unwrap();
    for fold in 0..3 {
        let (_, train) = conjugate_posterior(&data.subset(&plan.training_rows(fold)), 1.0, 1e-2);
        for &i in &plan.validation_rows(fold) {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let w = &fw.weights[fold];
            let se = w.iter().zip(func.column(i).iter()).map(|(a, v)| a * a * (v - means[fold][i]).powi(2)).sum::<f64>().sqrt();
            assert!((means[fold][i] - train.predictive_mean(&row)).abs() < 4.0 * se);
        }
    }
}
