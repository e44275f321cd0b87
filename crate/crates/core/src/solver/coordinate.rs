//! Cyclic coordinate descent (squared loss) and proximal Newton
//! (cross-entropy) for the weighted lasso with an unpenalized intercept.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{soft_threshold, FitResult, Loss, SolverConfig};
use crate::error::{check_dim, Error, Result};

/// A fixed `(targets, design, loss)` triple, solved at many penalty levels.
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    loss: Loss,
    x: DMatrix<f64>,
    h: Vec<f64>,
    /// `X'X / n` (squared loss only).
    gram: DMatrix<f64>,
    /// `X'h / n`.
    xh: Vec<f64>,
    mean: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn penalty(delta: &[f64], lambda: f64, w: &[f64]) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * delta.iter().zip(w).map(|(d, w)| w * d.abs()).sum::<f64>()
}

impl PenalizedProblem {
    /// `design` must carry the intercept (a column of ones) first.
    pub fn new(hbar: &[f64], design: &DMatrix<f64>, loss: Loss) -> Result<Self> {
        let n = design.nrows();
        check_dim("targets vs design rows", n, hbar.len())?;
        if n == 0 || design.ncols() == 0 {
            return Err(Error::invalid("empty design"));
        }
        if design.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("design column 0 must be the intercept (all ones)"));
        }
        if !hbar.iter().chain(design.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("solver inputs".into()));
        }
        if loss == Loss::CrossEntropy && hbar.iter().any(|h| !(0.0..=1.0).contains(h)) {
            return Err(Error::invalid("cross-entropy targets must lie in [0, 1]"));
        }
        let nf = n as f64;
        let gram = match loss {
            Loss::Squared => design.tr_mul(design) / nf,
            Loss::CrossEntropy => DMatrix::zeros(0, 0),
        };
        let hv = DVector::from_column_slice(hbar);
        let xh = (design.tr_mul(&hv) / nf).as_slice().to_vec();
        Ok(PenalizedProblem {
            loss,
            x: design.clone(),
            h: hbar.to_vec(),
            gram,
            xh,
            mean: hbar.iter().sum::<f64>() / nf,
        })
    }

    fn n(&self) -> f64 {
        self.h.len() as f64
    }

    fn q(&self) -> usize {
        self.x.ncols()
    }

    fn linear_predictor(&self, delta: &[f64]) -> Vec<f64> {
        self.x
            .row_iter()
            .map(|r| r.iter().zip(delta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Smooth part of the objective.
    pub fn data_loss(&self, delta: &[f64]) -> f64 {
        let eta = self.linear_predictor(delta);
        let total: f64 = match self.loss {
            Loss::Squared => eta.iter().zip(&self.h).map(|(e, h)| (h - e) * (h - e)).sum(),
            Loss::CrossEntropy => eta.iter().zip(&self.h).map(|(e, h)| softplus(*e) - h * e).sum(),
        };
        total / self.n()
    }

    pub fn objective(&self, delta: &[f64], lambda: f64, w: &[f64]) -> f64 {
        self.data_loss(delta) + penalty(delta, lambda, w)
    }

    /// Gradient of the smooth part.
    pub fn gradient(&self, delta: &[f64]) -> Vec<f64> {
        let eta = self.linear_predictor(delta);
        let (scale, r): (f64, Vec<f64>) = match self.loss {
            Loss::Squared => (2.0, eta.iter().zip(&self.h).map(|(e, h)| e - h).collect()),
            Loss::CrossEntropy => (1.0, eta.iter().zip(&self.h).map(|(e, h)| sigmoid(*e) - h).collect()),
        };
        let rv = DVector::from_vec(r);
        (self.x.tr_mul(&rv) * (scale / self.n())).as_slice().to_vec()
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_residual(&self, delta: &[f64], lambda: f64, w: &[f64]) -> f64 {
        let g = self.gradient(delta);
        g.iter()
            .zip(delta)
            .zip(w)
            .map(|((g, d), w)| {
                let t = lambda * w;
                if *d != 0.0 {
                    (g + t * d.signum()).abs()
                } else {
                    (g.abs() - t).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    fn lambda_max(&self, w: &[f64]) -> f64 {
        let scale = match self.loss {
            Loss::Squared => 2.0,
            Loss::CrossEntropy => 1.0,
        };
        let mut best = 0.0f64;
        for j in 1..self.q() {
            if w[j] == 0.0 {
                continue;
            }
            let g: f64 = self.x.column(j).iter().zip(&self.h).map(|(x, h)| x * (h - self.mean)).sum();
            best = best.max(scale * g.abs() / (self.n() * w[j]));
        }
        best
    }

    fn null_fit(&self) -> Result<Vec<f64>> {
        let mut delta = vec![0.0; self.q()];
        delta[0] = match self.loss {
            Loss::Squared => self.mean,
            Loss::CrossEntropy => {
                if self.mean <= 0.0 || self.mean >= 1.0 {
                    return Err(Error::NonFinite("intercept-only logistic fit with all-0 or all-1 targets".into()));
                }
                (self.mean / (1.0 - self.mean)).ln()
            }
        };
        Ok(delta)
    }

    /// Acceptance threshold for the KKT residual, relative to the target scale.
    fn kkt_threshold(&self, tol: f64) -> f64 {
        let scale = self.xh.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        10.0 * tol * scale.max(1.0)
    }

    /// Solves at `lambda` with column weights `w` (intercept weight 0).
    pub fn fit(&self, lambda: f64, w: &[f64], warm: Option<&[f64]>, cfg: &SolverConfig) -> Result<FitResult> {
        check_dim("column weights vs design columns", self.q(), w.len())?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        let all_penalized = w[1..].iter().all(|&v| v > 0.0);
        let (delta, iterations) = if all_penalized && lambda >= self.lambda_max(w) {
            // Every penalized coefficient is exactly zero at and above lambda_max.
            (self.null_fit()?, 0)
        } else {
            match self.loss {
                Loss::Squared => self.fit_squared(lambda, w, warm, cfg)?,
                Loss::CrossEntropy => self.fit_logistic(lambda, w, warm, cfg)?,
            }
        };
        let kkt = self.kkt_residual(&delta, lambda, w);
        let active_set = (1..self.q()).filter(|&j| delta[j] != 0.0).collect();
        Ok(FitResult {
            objective: self.objective(&delta, lambda, w),
            active_set,
            lambda,
            kkt_residual: kkt,
            iterations,
            delta,
        })
    }

    fn fit_squared(&self, lambda: f64, w: &[f64], warm: Option<&[f64]>, cfg: &SolverConfig) -> Result<(Vec<f64>, usize)> {
        let q = self.q();
        let threshold = self.kkt_threshold(cfg.tol);
        let unpenalized = lambda == 0.0 || w.iter().all(|&v| v == 0.0);
        if unpenalized {
            if let Some(chol) = Cholesky::new(self.gram.clone()) {
                let sol = chol.solve(&DVector::from_column_slice(&self.xh));
                let delta = sol.as_slice().to_vec();
                if delta.iter().all(|v| v.is_finite()) && self.kkt_residual(&delta, lambda, w) <= threshold {
                    return Ok((delta, 1));
                }
            }
        }
        let mut delta = match warm {
            Some(d) => {
                check_dim("warm start length", q, d.len())?;
                d.to_vec()
            }
            None => self.null_fit()?,
        };
        let g = &self.gram;
        let mut gd: Vec<f64> = (0..q).map(|j| (0..q).map(|k| g[(j, k)] * delta[k]).sum()).collect();
        let mut iters = 0;
        loop {
            let max_change = self.sweep(&mut delta, &mut gd, lambda, w);
            iters += 1;
            if max_change < cfg.tol {
                // refresh the running product before certifying
                for (j, v) in gd.iter_mut().enumerate() {
                    *v = (0..q).map(|k| g[(j, k)] * delta[k]).sum();
                }
                let kkt = self.kkt_residual(&delta, lambda, w);
                if kkt <= threshold {
                    return Ok((delta, iters));
                }
                if iters >= cfg.max_iters {
                    return Err(Error::NoConvergence {
                        iterations: iters,
                        max_change,
                        kkt_residual: kkt,
                    });
                }
            } else if iters >= cfg.max_iters {
                return Err(Error::NoConvergence {
                    iterations: iters,
                    max_change,
                    kkt_residual: self.kkt_residual(&delta, lambda, w),
                });
            }
        }
    }

    /// One cyclic pass over all coordinates; `gd` tracks `gram * delta`.
    /// Returns the largest coefficient change.
    fn sweep(&self, delta: &mut [f64], gd: &mut [f64], lambda: f64, w: &[f64]) -> f64 {
        let g = &self.gram;
        let mut max_change = 0.0f64;
        for j in 0..delta.len() {
            let a = g[(j, j)];
            if a == 0.0 {
                continue;
            }
            let old = delta[j];
            let z = self.xh[j] - gd[j] + a * old;
            let new = soft_threshold(z, 0.5 * lambda * w[j]) / a;
            if new != old {
                let d = new - old;
                for (k, v) in gd.iter_mut().enumerate() {
                    *v += d * g[(k, j)];
                }
                delta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        max_change
    }

    fn fit_logistic(&self, lambda: f64, w: &[f64], warm: Option<&[f64]>, cfg: &SolverConfig) -> Result<(Vec<f64>, usize)> {
        let q = self.q();
        let n = self.n();
        let threshold = self.kkt_threshold(cfg.tol);
        let mut delta = match warm {
            Some(d) => {
                check_dim("warm start length", q, d.len())?;
                d.to_vec()
            }
            None => self.null_fit()?,
        };
        let mut iters = 0;
        let mut f_cur = self.objective(&delta, lambda, w);
        loop {
            let eta = self.linear_predictor(&delta);
            let p: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
            let wts: Vec<f64> = p.iter().map(|p| (p * (1.0 - p)).max(1e-12)).collect();
            let mut xw = self.x.clone();
            for (i, wi) in wts.iter().enumerate() {
                xw.row_mut(i).scale_mut(*wi);
            }
            let hess = self.x.tr_mul(&xw) / n;
            let grad = self.gradient(&delta);
            // quadratic model: 0.5 d' H d - b' d + penalty
            let hd: Vec<f64> = (0..q).map(|j| (0..q).map(|k| hess[(j, k)] * delta[k]).sum()).collect();
            let b: Vec<f64> = hd.iter().zip(&grad).map(|(a, g)| a - g).collect();
            let mut next = delta.clone();
            let mut hn = hd.clone();
            for _ in 0..10_000 {
                let mut max_change = 0.0f64;
                for j in 0..q {
                    let a = hess[(j, j)];
                    if a == 0.0 {
                        continue;
                    }
                    let old = next[j];
                    let z = b[j] - hn[j] + a * old;
                    let new = soft_threshold(z, lambda * w[j]) / a;
                    if new != old {
                        let d = new - old;
                        for (k, v) in hn.iter_mut().enumerate() {
                            *v += d * hess[(k, j)];
                        }
                        next[j] = new;
                        max_change = max_change.max(d.abs());
                    }
                }
                iters += 1;
                if max_change < 0.1 * cfg.tol {
                    break;
                }
            }
            let dir: Vec<f64> = next.iter().zip(&delta).map(|(a, b)| a - b).collect();
            let decrease = grad.iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>() + penalty(&next, lambda, w)
                - penalty(&delta, lambda, w);
            let mut t = 1.0;
            let mut cand: Vec<f64>;
            let mut f_new;
            loop {
                cand = delta.iter().zip(&dir).map(|(d, s)| d + t * s).collect();
                f_new = self.objective(&cand, lambda, w);
                if f_new <= f_cur + 0.25 * t * decrease.min(0.0) || t < 1e-10 {
                    break;
                }
                t *= 0.5;
            }
            let step = dir.iter().fold(0.0f64, |a, d| a.max((t * d).abs()));
            if !cand.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("logistic coefficients diverged".into()));
            }
            delta = cand;
            f_cur = f_new;
            if step < cfg.tol {
                let kkt = self.kkt_residual(&delta, lambda, w);
                if kkt <= threshold {
                    return Ok((delta, iters));
                }
                if t < 1e-10 || iters >= cfg.max_iters {
                    return Err(Error::NoConvergence {
                        iterations: iters,
                        max_change: step,
                        kkt_residual: kkt,
                    });
                }
            } else if iters >= cfg.max_iters {
                return Err(Error::NoConvergence {
                    iterations: iters,
                    max_change: step,
                    kkt_residual: self.kkt_residual(&delta, lambda, w),
                });
            }
        }
    }
}
