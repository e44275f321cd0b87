//! Adaptive penalty weights from per-draw least-squares projections.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Cap on a single adaptive weight.
pub const W_MAX: f64 = 1e6;

/// Ridge used when the design is rank deficient.
const PROJECTION_RIDGE: f64 = 1e-6;

/// `w_j = mean_s min(1 / |d_j^s|, w_max)` where `d^s` projects the functional
/// draws `h(y_i^s)` (row `s` of the `S x n` matrix) onto the design.
/// Returns one weight per non-intercept column.
pub fn adaptive_weights(func_draws: &DMatrix<f64>, design: &DMatrix<f64>, w_max: f64) -> Result<Vec<f64>> {
    let (s_count, n) = func_draws.shape();
    check_dim("functional draws vs design rows", design.nrows(), n)?;
    if s_count == 0 {
        return Err(Error::invalid("adaptive weights need at least one draw"));
    }
    if !(w_max > 0.0) {
        return Err(Error::invalid("weight cap must be positive"));
    }
    for (j, col) in design.column_iter().enumerate() {
        if col.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroColumn { column: j });
        }
    }
    let (chol, _ridged) = linalg::cholesky_ridged(&design.tr_mul(design), PROJECTION_RIDGE, "adaptive weight projection")?;
    // q x S coefficients, one column per draw
    let coefs = chol.solve(&design.tr_mul(&func_draws.transpose()));
    let q = design.ncols();
    let mut out = vec![0.0; q.saturating_sub(1)];
    for (j, w) in out.iter_mut().enumerate() {
        let row = coefs.row(j + 1);
        let total: f64 = row.iter().map(|d| (1.0 / d.abs()).min(w_max)).sum();
        *w = total / s_count as f64;
    }
    if out.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("adaptive weights".into()));
    }
    Ok(out)
}

/// Weights `min(1 / |d_j|, w_max)` from a single coefficient vector
/// (intercept first, excluded).
pub fn weights_from_coefficients(coefs: &DVector<f64>, w_max: f64) -> Vec<f64> {
    coefs.iter().skip(1).map(|d| (1.0 / d.abs()).min(w_max)).collect()
}
