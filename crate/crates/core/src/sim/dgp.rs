//! Synthetic curves whose argmax is linear in correlated mixed covariates.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

const AR_CORRELATION: f64 = 0.75;
const TAU_RANGE: (f64, f64) = (0.2, 0.8);
const SHAPE_DOF: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    /// Root signal-to-noise ratio; infinity means noiseless curves.
    pub rsnr: f64,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 100,
            p: 50,
            m: 200,
            rsnr: 5.0,
            seed: 0,
            replications: 100,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(Error::invalid("the simulation needs p >= 4"));
        }
        if self.m < 3 {
            return Err(Error::invalid("the simulation needs m >= 3"));
        }
        if self.n < 2 {
            return Err(Error::invalid("the simulation needs n >= 2"));
        }
        if !(self.rsnr > 0.0) {
            return Err(Error::invalid("rsnr must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Intercept first.
    pub beta_star: Vec<f64>,
    pub tau_star: Vec<f64>,
    /// Noiseless curves, one row per subject.
    pub curves: Vec<Vec<f64>>,
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// Indices of the binarized covariates (0-based, excluding the intercept).
    pub binary_columns: Vec<usize>,
    pub noise_sd: f64,
    /// How the noise level was set.
    pub noise_rule: String,
}

impl SimTruth {
    /// Nonzero coefficients as indices into `beta_star` (intercept excluded).
    pub fn support(&self) -> Vec<usize> {
        (1..self.beta_star.len()).filter(|&j| self.beta_star[j] != 0.0).collect()
    }
}

/// `a0 + a1 t - (a1 + a2) (t - peak)_+`
pub fn peak_curve(a0: f64, a1: f64, a2: f64, peak: f64, t: f64) -> f64 {
    a0 + a1 * t - (a1 + a2) * (t - peak).max(0.0)
}

pub fn simulate(cfg: &SimConfig) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let (n, p, m) = (cfg.n, cfg.p, cfg.m);
    let mut r = rng::stream(cfg.seed, 0);

    // AR(1) rows have unit marginal variance and correlation 0.75^|j - j'|.
    let innov = (1.0 - AR_CORRELATION * AR_CORRELATION).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = r.sample(StandardNormal);
        x[(i, 0)] = prev;
        for j in 1..p {
            let z: f64 = r.sample(StandardNormal);
            prev = AR_CORRELATION * prev + innov * z;
            x[(i, j)] = prev;
        }
    }
    let mut binary_columns = index::sample(&mut r, p, p / 2).into_vec();
    binary_columns.sort_unstable();
    for &j in &binary_columns {
        for i in 0..n {
            x[(i, j)] = if x[(i, j)] >= 0.0 { 1.0 } else { 0.0 };
        }
    }
    for j in (0..p).filter(|j| !binary_columns.contains(j)) {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let (mu, sd) = (linalg::mean(&col), linalg::sample_sd(&col));
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - mu) / sd * data::COVARIATE_SD;
        }
    }

    let k = (0.05 * p as f64).ceil() as usize;
    let picks = index::sample(&mut r, p, 2 * k).into_vec();
    let mut raw = vec![0.0; p + 1];
    raw[0] = 1.0;
    for (t, &j) in picks.iter().enumerate() {
        raw[j + 1] = if t < k { 1.0 } else { -1.0 };
    }
    let design = data::with_intercept(&x);
    let lin: Vec<f64> = (0..n).map(|i| design.row(i).iter().zip(&raw).map(|(a, b)| a * b).sum()).collect();
    let lo = lin.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::invalid("degenerate design: the linear signal is constant"));
    }
    let scale = (TAU_RANGE.1 - TAU_RANGE.0) / (hi - lo);
    let mut beta_star: Vec<f64> = raw.iter().map(|b| b * scale).collect();
    beta_star[0] = TAU_RANGE.0 + scale * (raw[0] - lo);
    let tau_star: Vec<f64> = (0..n)
        .map(|i| {
            let t: f64 = design.row(i).iter().zip(&beta_star).map(|(a, b)| a * b).sum();
            t.clamp(TAU_RANGE.0, TAU_RANGE.1)
        })
        .collect();

    let chi = ChiSquared::new(SHAPE_DOF).expect("valid dof");
    let tau = data::unit_grid(m);
    let (mut a0, mut a1, mut a2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut curves = Vec::with_capacity(n);
    for &peak in &tau_star {
        let (b0, b1, b2): (f64, f64, f64) = (r.sample(StandardNormal), chi.sample(&mut r), chi.sample(&mut r));
        curves.push(tau.iter().map(|&t| peak_curve(b0, b1, b2, peak, t)).collect::<Vec<f64>>());
        a0.push(b0);
        a1.push(b1);
        a2.push(b2);
    }
    let all: Vec<f64> = curves.iter().flatten().copied().collect();
    let noise_sd = if cfg.rsnr.is_infinite() { 0.0 } else { linalg::sample_sd(&all) / cfg.rsnr };
    let y = DMatrix::from_fn(n, m, |i, j| {
        let e: f64 = if noise_sd > 0.0 { r.sample(StandardNormal) } else { 0.0 };
        curves[i][j] + noise_sd * e
    });
    let dataset = Dataset::new(x, y, tau)?;
    Ok((
        dataset,
        SimTruth {
            beta_star,
            tau_star,
            curves,
            a0,
            a1,
            a2,
            binary_columns,
            noise_sd,
            noise_rule: "sample sd of all noiseless curve values divided by rsnr".into(),
        },
    ))
}
