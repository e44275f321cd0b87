//! Conjugate Gaussian linear regression: closed-form posterior and exact
//! (independent) posterior sampling.
//!
//! With known noise variance `s2` and prior `beta ~ N(0, P0^-1)`:
//!
//! ```text
//! beta | y ~ N(mu, V),  V = (X'X / s2 + P0)^-1,  mu = V X'y / s2
//! ```
//!
//! With an inverse-gamma noise prior the coefficient prior is scaled by the
//! noise, `beta | s2 ~ N(0, s2 P0^-1)`, `s2 ~ IG(a0, b0)`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Chol};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseVariance {
    Known { value: f64 },
    InverseGamma { a0: f64, b0: f64 },
}

#[derive(Debug, Clone)]
pub struct ConjugateLinearModel {
    pub prior_precision: DMatrix<f64>,
    pub noise: NoiseVariance,
}

impl ConjugateLinearModel {
    pub fn known_noise(prior_precision: DMatrix<f64>, noise_variance: f64) -> Self {
        ConjugateLinearModel {
            prior_precision,
            noise: NoiseVariance::Known { value: noise_variance },
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        check_dim("prior precision rows", d, self.prior_precision.nrows())?;
        check_dim("prior precision columns", d, self.prior_precision.ncols())?;
        let asym = (&self.prior_precision - self.prior_precision.transpose()).abs().max();
        if asym > 1e-12 * self.prior_precision.abs().max().max(1.0) {
            return Err(Error::NotPositiveDefinite("prior precision is not symmetric"));
        }
        linalg::cholesky(self.prior_precision.clone(), "prior precision")?;
        match self.noise {
            NoiseVariance::Known { value } if !(value > 0.0) => {
                Err(Error::invalid("noise variance must be positive"))
            }
            NoiseVariance::InverseGamma { a0, b0 } if !(a0 > 0.0 && b0 > 0.0) => {
                Err(Error::invalid("inverse-gamma hyperparameters must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Closed-form posterior over the regression coefficients.
#[derive(Debug, Clone)]
pub struct ConjugatePosterior {
    pub mean: DVector<f64>,
    /// Marginal posterior covariance of the coefficients.
    pub covariance: DMatrix<f64>,
    /// Cholesky factor of the conditional precision (scaled by the noise
    /// variance in the inverse-gamma case).
    precision_chol: Chol,
    pub noise: PosteriorNoise,
}

#[derive(Debug, Clone, Copy)]
pub enum PosteriorNoise {
    Known(f64),
    InverseGamma { a: f64, b: f64 },
}

pub fn fit_conjugate(design: &DMatrix<f64>, y: &DVector<f64>, model: &ConjugateLinearModel) -> Result<ConjugatePosterior> {
    let d = design.ncols();
    check_dim("response length", design.nrows(), y.len())?;
    model.validate(d)?;
    let xtx = design.tr_mul(design);
    let xty = design.tr_mul(y);
    match model.noise {
        NoiseVariance::Known { value: s2 } => {
            let precision = xtx / s2 + &model.prior_precision;
            let chol = linalg::cholesky(precision, "posterior precision")?;
            let mean = chol.solve(&(xty / s2));
            let covariance = chol.inverse();
            Ok(ConjugatePosterior {
                mean,
                covariance,
                precision_chol: chol,
                noise: PosteriorNoise::Known(s2),
            })
        }
        NoiseVariance::InverseGamma { a0, b0 } => {
            let precision = xtx + &model.prior_precision;
            let chol = linalg::cholesky(precision, "posterior precision")?;
            let mean = chol.solve(&xty);
            let n = y.len() as f64;
            let a = a0 + 0.5 * n;
            let quad = y.dot(y) - xty.dot(&mean);
            let b = b0 + 0.5 * quad.max(0.0);
            let v = chol.inverse();
            let covariance = if a > 1.0 { v * (b / (a - 1.0)) } else { v * f64::INFINITY };
            Ok(ConjugatePosterior {
                mean,
                covariance,
                precision_chol: chol,
                noise: PosteriorNoise::InverseGamma { a, b },
            })
        }
    }
}

/// Fits the model on the dataset's design (intercept first), so the
/// coefficient vector has length `p + 1`.
pub fn fit_conjugate_dataset(data: &crate::data::Dataset, model: &ConjugateLinearModel) -> Result<ConjugatePosterior> {
    if data.m() != 1 {
        return Err(Error::invalid("the conjugate model needs a scalar response (m = 1)"));
    }
    let y = DVector::from_iterator(data.n(), data.y.column(0).iter().copied());
    fit_conjugate(&data.design(), &y, model)
}

/// Posterior draws of the conjugate model; rows are draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateDraws {
    /// S x d coefficient draws.
    pub beta: DMatrix<f64>,
    /// S noise-variance draws.
    pub sigma2: DVector<f64>,
}

impl ConjugateDraws {
    pub fn num_draws(&self) -> usize {
        self.beta.nrows()
    }

    pub fn dim(&self) -> usize {
        self.beta.ncols()
    }

    pub fn mean_at(&self, s: usize, row: &[f64]) -> f64 {
        row.iter().zip(self.beta.row(s).iter()).map(|(a, b)| a * b).sum()
    }

    pub fn log_lik(&self, s: usize, row: &[f64], y: f64) -> f64 {
        let s2 = self.sigma2[s];
        let r = y - self.mean_at(s, row);
        -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + r * r / s2)
    }
}

impl ConjugatePosterior {
    /// Exact iid posterior draws.
    pub fn sample(&self, num_draws: usize, seed: u64) -> Result<ConjugateDraws> {
        if num_draws == 0 {
            return Err(Error::invalid("number of draws must be positive"));
        }
        let d = self.mean.len();
        let mut beta = DMatrix::zeros(num_draws, d);
        let mut sigma2 = DVector::zeros(num_draws);
        for s in 0..num_draws {
            let mut r = rng::stream(seed, s as u64);
            let s2 = match self.noise {
                PosteriorNoise::Known(v) => v,
                PosteriorNoise::InverseGamma { a, b } => {
                    let g = Gamma::new(a, 1.0 / b).map_err(|e| Error::invalid(e.to_string()))?;
                    1.0 / g.sample(&mut r)
                }
            };
            let z = linalg::sample_from_precision(&self.precision_chol, &DVector::zeros(d), &mut r);
            let scale = match self.noise {
                PosteriorNoise::Known(_) => 1.0,
                PosteriorNoise::InverseGamma { .. } => s2.sqrt(),
            };
            let b = &self.mean + z * scale;
            beta.row_mut(s).copy_from(&b.transpose());
            sigma2[s] = s2;
        }
        Ok(ConjugateDraws { beta, sigma2 })
    }

    /// Closed-form predictive mean `x' mu`.
    pub fn predictive_mean(&self, row: &[f64]) -> f64 {
        row.iter().zip(self.mean.iter()).map(|(a, b)| a * b).sum()
    }

    /// Closed-form predictive variance `x' Cov x + E[s2]`.
    pub fn predictive_variance(&self, row: &[f64]) -> f64 {
        let x = DVector::from_column_slice(row);
        let noise = match self.noise {
            PosteriorNoise::Known(v) => v,
            PosteriorNoise::InverseGamma { a, b } => b / (a - 1.0),
        };
        (x.transpose() * &self.covariance * &x)[(0, 0)] + noise
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strong_prior_pins_mean_at_zero() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i as f64 + 1.0) * if j == 0 { 1.0 } else { -0.3 });
        let y = DVector::from_fn(10, |i, _| i as f64);
        let model = ConjugateLinearModel::known_noise(DMatrix::identity(2, 2) * 1e6, 1.0);
        let post = fit_conjugate(&x, &y, &model).unwrap();
        assert!(post.mean.abs().max() < 1e-3);
    }

    #[test]
    fn flat_prior_identity_design_recovers_data() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let model = ConjugateLinearModel::known_noise(DMatrix::identity(2, 2) * 1e-12, 1.0);
        let post = fit_conjugate(&x, &y, &model).unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-9);
        assert!((post.mean[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_priors() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let bad = ConjugateLinearModel::known_noise(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1.0);
        assert!(matches!(fit_conjugate(&x, &y, &bad), Err(Error::NotPositiveDefinite(_))));
        let wrong = ConjugateLinearModel::known_noise(DMatrix::identity(3, 3), 1.0);
        assert!(matches!(fit_conjugate(&x, &y, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sampling_is_deterministic() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i * 2 + j) as f64 * 0.1);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let model = ConjugateLinearModel {
            prior_precision: DMatrix::identity(2, 2),
            noise: NoiseVariance::InverseGamma { a0: 2.0, b0: 1.0 },
        };
        let post = fit_conjugate(&x, &y, &model).unwrap();
        let a = post.sample(20, 5).unwrap();
        let b = post.sample(20, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.sigma2.iter().all(|&v| v > 0.0));
    }
}
