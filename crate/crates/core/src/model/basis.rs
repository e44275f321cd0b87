//! Cubic B-spline basis on an equally spaced knot grid, orthonormalized over
//! the observation points.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default number of basis functions for a grid of `m` points.
pub fn default_num_basis(m: usize) -> usize {
    15.min(m.div_ceil(4)).max(1)
}

/// Raw (non-orthogonal) B-spline evaluations, `m x num_basis`.
///
/// Uses clamped knots over `[tau_min, tau_max]`. The spline order is 4 when
/// `num_basis >= 4` and drops to `num_basis` otherwise.
pub fn bspline_matrix(tau: &[f64], num_basis: usize) -> Result<DMatrix<f64>> {
    if num_basis == 0 {
        return Err(Error::invalid("number of basis functions must be positive"));
    }
    if tau.is_empty() {
        return Err(Error::invalid("empty evaluation grid"));
    }
    let order = num_basis.min(4);
    let lo = tau[0];
    let hi = tau[tau.len() - 1];
    let interior = num_basis - order;
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut knots = vec![lo; order];
    for k in 1..=interior {
        knots.push(lo + span * k as f64 / (interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(lo + span, order));

    let mut out = DMatrix::zeros(tau.len(), num_basis);
    for (r, &t) in tau.iter().enumerate() {
        let vals = eval_bsplines(&knots, order, t, num_basis);
        for (c, v) in vals.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

// Cox-de Boor recursion on a clamped knot vector.
fn eval_bsplines(knots: &[f64], order: usize, t: f64, num_basis: usize) -> Vec<f64> {
    let nk = knots.len();
    let last = knots[nk - 1];
    let mut b: Vec<f64> = (0..nk - 1)
        .map(|j| {
            let (a, c) = (knots[j], knots[j + 1]);
            let inside = if c == last && t == last { a < c && t >= a } else { t >= a && t < c };
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for k in 2..=order {
        let mut next = vec![0.0; nk - k];
        for j in 0..nk - k {
            let d1 = knots[j + k - 1] - knots[j];
            let d2 = knots[j + k] - knots[j + 1];
            let left = if d1 > 0.0 { (t - knots[j]) / d1 * b[j] } else { 0.0 };
            let right = if d2 > 0.0 { (knots[j + k] - t) / d2 * b[j + 1] } else { 0.0 };
            next[j] = left + right;
        }
        b = next;
    }
    b.truncate(num_basis);
    b
}

/// Thin-QR orthonormalization: returns `Q` with `Q^T Q = I` spanning the
/// columns of `raw`.
pub fn orthonormalize(raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, l) = raw.shape();
    if l > m {
        return Err(Error::invalid(format!("{l} basis functions exceed {m} grid points")));
    }
    let qr = raw.clone().qr();
    let r = qr.r();
    for c in 0..l {
        let norm = raw.column(c).norm();
        if !(r[(c, c)].abs() > 1e-10 * norm.max(f64::MIN_POSITIVE)) {
            return Err(Error::DegenerateBasis { column: c });
        }
    }
    Ok(qr.q())
}

/// Orthonormal cubic spline basis on `tau`.
pub fn orthonormal_basis(tau: &[f64], num_basis: usize) -> Result<DMatrix<f64>> {
    orthonormalize(&bspline_matrix(tau, num_basis)?)
}
