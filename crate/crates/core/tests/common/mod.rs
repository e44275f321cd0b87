//! Fixtures and brute-force oracles shared by the integration suites.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use targetpred::data::{with_intercept, Dataset};
use targetpred::model::{fit_conjugate, ConjugateLinearModel, ConjugatePosterior};
use targetpred::rng::{self, StreamRng};
use targetpred::solver::Loss;

pub fn gen(seed: u64) -> StreamRng {
    rng::stream(seed, 999)
}

pub fn normal(r: &mut StreamRng) -> f64 {
    r.sample(StandardNormal)
}

/// `n x p` standard normal covariates.
pub fn covariates(n: usize, p: usize, r: &mut StreamRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| normal(r))
}

/// Design with a leading intercept column.
pub fn design(n: usize, p: usize, r: &mut StreamRng) -> DMatrix<f64> {
    with_intercept(&covariates(n, p, r))
}

/// Scalar-response dataset `y = X b + e` on a single-point grid.
pub fn scalar_dataset(n: usize, p: usize, noise_sd: f64, r: &mut StreamRng) -> (Dataset, DVector<f64>) {
    let x = covariates(n, p, r);
    let beta = DVector::from_fn(p + 1, |_, _| normal(r));
    let d = with_intercept(&x);
    let mean = &d * &beta;
    let y = DMatrix::from_fn(n, 1, |i, _| mean[i] + noise_sd * normal(r));
    (Dataset::new(x, y, vec![0.5]).unwrap(), beta)
}

pub fn conjugate_posterior(data: &Dataset, noise_var: f64, prior_precision: f64) -> (ConjugateLinearModel, ConjugatePosterior) {
    let q = data.p() + 1;
    let model = ConjugateLinearModel::known_noise(DMatrix::identity(q, q) * prior_precision, noise_var);
    let y = DVector::from_column_slice(data.y.column(0).as_slice());
    let post = fit_conjugate(&data.design(), &y, &model).unwrap();
    (model, post)
}

/// `(1/n) sum (h - X d)^2 + lambda sum_j w_j |d_j|`, intercept unpenalized.
pub fn objective(h: &[f64], x: &DMatrix<f64>, delta: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let n = h.len();
    let mut loss = 0.0;
    for i in 0..n {
        let mut pred = 0.0;
        for j in 0..x.ncols() {
            pred += x[(i, j)] * delta[j];
        }
        loss += (h[i] - pred).powi(2);
    }
    let pen: f64 = (1..delta.len()).map(|j| w[j - 1] * delta[j].abs()).sum();
    loss / n as f64 + lambda * pen
}

/// Ordinary least squares through the explicit inverse of `X'X`.
pub fn ols(x: &DMatrix<f64>, h: &[f64]) -> Vec<f64> {
    let xtx = x.transpose() * x;
    let inv = xtx.try_inverse().expect("full rank design");
    let b = inv * x.transpose() * DVector::from_column_slice(h);
    b.as_slice().to_vec()
}

/// Column means of an `S x n` matrix by explicit loops.
pub fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let (s, n) = m.shape();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for r in 0..s {
                acc += m[(r, i)];
            }
            acc / s as f64
        })
        .collect()
}

/// Type-7 sample quantile.
pub fn quantile7(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Independent subgradient check; returns the largest violation.
pub fn kkt_violation(h: &[f64], x: &DMatrix<f64>, delta: &[f64], lambda: f64, w: &[f64], loss: Loss) -> f64 {
    let n = h.len();
    let mut grad = vec![0.0; x.ncols()];
    for i in 0..n {
        let mut eta = 0.0;
        for j in 0..x.ncols() {
            eta += x[(i, j)] * delta[j];
        }
        let r = match loss {
            Loss::Squared => -2.0 * (h[i] - eta),
            Loss::CrossEntropy => 1.0 / (1.0 + (-eta).exp()) - h[i],
        };
        for j in 0..x.ncols() {
            grad[j] += x[(i, j)] * r / n as f64;
        }
    }
    let mut worst = grad[0].abs();
    for j in 1..x.ncols() {
        let t = lambda * w[j - 1];
        let v = if delta[j] != 0.0 {
            (grad[j] + t * delta[j].signum()).abs()
        } else {
            (grad[j].abs() - t).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Columns of a Sylvester-Hadamard matrix of order 8; the first is all ones.
pub fn hadamard8() -> DMatrix<f64> {
    DMatrix::from_fn(8, 8, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}
