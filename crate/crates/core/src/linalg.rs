//! Small dense linear-algebra and summary helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

pub fn cholesky(m: DMatrix<f64>, context: &'static str) -> Result<Chol> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("{context}: matrix entries")));
    }
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite(context))
}

/// Cholesky of `m`, retrying with `ridge * I` added when `m` is singular.
pub fn cholesky_ridged(m: &DMatrix<f64>, ridge: f64, context: &'static str) -> Result<(Chol, bool)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        let l = c.l_dirty();
        // Pivots below 1e-12 of the diagonal mean numerical rank loss.
        let diag_ok = (0..m.nrows()).all(|i| l[(i, i)] > 1e-6 * m[(i, i)].abs().sqrt());
        if diag_ok {
            return Ok((c, false));
        }
    }
    let mut r = m.clone();
    for i in 0..r.nrows() {
        r[(i, i)] += ridge;
    }
    Cholesky::new(r)
        .map(|c| (c, true))
        .ok_or(Error::NotPositiveDefinite(context))
}

/// Draws from N(mean, P^-1) given the Cholesky factor of the precision P.
pub fn sample_from_precision<R: Rng + ?Sized>(chol: &Chol, mean: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let l = chol.l_dirty();
    let mut x = z;
    // L^T x = z
    let solved = l.tr_solve_lower_triangular_mut(&mut x);
    debug_assert!(solved);
    x + mean
}

/// `X^T X` exploiting symmetry.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

/// Least-squares coefficients; falls back to a `ridge` stabilized solve when
/// the design is rank deficient. Returns the coefficients and whether the
/// ridge was needed.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<(DVector<f64>, bool)> {
    let (chol, ridged) = cholesky_ridged(&gram(x), ridge, "least squares normal equations")?;
    Ok((chol.solve(&x.tr_mul(y)), ridged))
}

/// Trapezoid quadrature weights on a strictly increasing grid.
pub fn trapezoid_weights(tau: &[f64]) -> Vec<f64> {
    let m = tau.len();
    let mut w = vec![0.0; m];
    for j in 0..m.saturating_sub(1) {
        let h = tau[j + 1] - tau[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
    }
    w
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let mu = mean(v);
    let ss: f64 = v.iter().map(|x| (x - mu) * (x - mu)).sum();
    (ss / (v.len() as f64 - 1.0)).sqrt()
}

/// Quantile with linear interpolation between order statistics (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

pub fn median(v: &[f64]) -> f64 {
    quantile(&sorted(v), 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights_integrate_linear_exactly() {
        let tau = [0.0, 0.1, 0.35, 0.6, 1.0];
        let w = trapezoid_weights(&tau);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let integral: f64 = w.iter().zip(&tau).map(|(w, t)| w * (2.0 * t + 1.0)).sum();
        assert!((integral - 2.0).abs() < 1e-14);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert!((quantile(&s, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn ridge_fallback_on_rank_deficient_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (_, ridged) = least_squares(&x, &y, 1e-6).unwrap();
        assert!(ridged);
    }
}
