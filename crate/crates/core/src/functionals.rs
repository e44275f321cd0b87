//! Functionals `h(y)` of a response curve observed on a grid.
//!
//! Integrals use the trapezoid rule on the observed grid and are divided by
//! the grid span, so every integral is an average over the observed domain.
//! A single-point grid degenerates to the value at that point.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub const DEFAULT_SEDENTARY_THRESHOLD: f64 = 100.0;

/// Tolerance for treating a continuous value as zero in `zeros_window`.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub enum FunctionalSpec {
    Avg,
    /// Average of `log(1 + y)`.
    Tlac,
    Sd,
    /// Fraction of the domain with `y <= threshold`.
    Sedentary { threshold: f64 },
    Max,
    Argmax,
    /// 1 if the curve vanishes on every grid point of `[lo, hi]`, else 0.
    ZerosWindow { lo: f64, hi: f64 },
    /// Linear contrast `C y` with `C` given row-major.
    Contrast { matrix: DMatrix<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    kind: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    params: Value,
}

impl TryFrom<RawSpec> for FunctionalSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> std::result::Result<Self, String> {
        let num = |key: &str| -> std::result::Result<Option<f64>, String> {
            match raw.params.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v.as_f64().map(Some).ok_or_else(|| format!("parameter `{key}` must be a number")),
            }
        };
        let spec = match raw.kind.as_str() {
            "avg" => FunctionalSpec::Avg,
            "tlac" => FunctionalSpec::Tlac,
            "sd" => FunctionalSpec::Sd,
            "max" => FunctionalSpec::Max,
            "argmax" => FunctionalSpec::Argmax,
            "sedentary" => FunctionalSpec::Sedentary {
                threshold: num("threshold")?.unwrap_or(DEFAULT_SEDENTARY_THRESHOLD),
            },
            "zeros_window" => FunctionalSpec::ZerosWindow {
                lo: num("lo")?.ok_or("zeros_window needs `lo`")?,
                hi: num("hi")?.ok_or("zeros_window needs `hi`")?,
            },
            "contrast" => {
                let rows: Vec<Vec<f64>> = raw
                    .params
                    .get("matrix")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .map_err(|e| format!("contrast matrix: {e}"))?
                    .ok_or("contrast needs `matrix` (or a CSV resolved before parsing)")?;
                FunctionalSpec::Contrast {
                    matrix: rows_to_matrix(&rows)?,
                }
            }
            other => return Err(format!("unknown functional kind `{other}`")),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl From<FunctionalSpec> for RawSpec {
    fn from(spec: FunctionalSpec) -> Self {
        let params = match &spec {
            FunctionalSpec::Sedentary { threshold } => serde_json::json!({ "threshold": threshold }),
            FunctionalSpec::ZerosWindow { lo, hi } => serde_json::json!({ "lo": lo, "hi": hi }),
            FunctionalSpec::Contrast { matrix } => {
                let rows: Vec<Vec<f64>> = matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
                serde_json::json!({ "matrix": rows })
            }
            _ => Value::Null,
        };
        RawSpec {
            kind: spec.kind().to_string(),
            params,
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let m = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.is_empty() || m == 0 {
        return Err("contrast matrix is empty".into());
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err("contrast matrix rows have unequal lengths".into());
    }
    Ok(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}

/// Value of a functional on one curve.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl FunctionalValue {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            FunctionalValue::Scalar(v) => std::slice::from_ref(v),
            FunctionalValue::Vector(v) => v,
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            FunctionalValue::Scalar(v) => Some(*v),
            FunctionalValue::Vector(_) => None,
        }
    }
}

impl FunctionalSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            FunctionalSpec::Avg => "avg",
            FunctionalSpec::Tlac => "tlac",
            FunctionalSpec::Sd => "sd",
            FunctionalSpec::Sedentary { .. } => "sedentary",
            FunctionalSpec::Max => "max",
            FunctionalSpec::Argmax => "argmax",
            FunctionalSpec::ZerosWindow { .. } => "zeros_window",
            FunctionalSpec::Contrast { .. } => "contrast",
        }
    }

    /// Binary functionals are targeted with the cross-entropy loss.
    pub fn is_binary(&self) -> bool {
        matches!(self, FunctionalSpec::ZerosWindow { .. })
    }

    /// Number of outputs per curve.
    pub fn output_dim(&self) -> usize {
        match self {
            FunctionalSpec::Contrast { matrix } => matrix.nrows(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionalSpec::Sedentary { threshold } if !threshold.is_finite() => {
                Err(Error::invalid("sedentary threshold must be finite"))
            }
            FunctionalSpec::ZerosWindow { lo, hi } => {
                if !(0.0..=1.0).contains(lo) || !(0.0..=1.0).contains(hi) || lo >= hi {
                    Err(Error::invalid(format!("zeros window [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1")))
                } else {
                    Ok(())
                }
            }
            FunctionalSpec::Contrast { matrix } if matrix.iter().any(|v| !v.is_finite()) => {
                Err(Error::invalid("contrast matrix has non-finite entries"))
            }
            _ => Ok(()),
        }
    }

    /// Contrast whose matrix is read from a headerless CSV file.
    pub fn contrast_from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::format(path, e.to_string()))?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::format(path, format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let matrix = rows_to_matrix(&rows).map_err(|e| Error::format(path, e))?;
        let spec = FunctionalSpec::Contrast { matrix };
        spec.validate()?;
        Ok(spec)
    }
}

/// Precomputed quadrature for one grid, reused across many curves.
#[derive(Debug, Clone)]
pub struct Quadrature {
    tau: Vec<f64>,
    /// Trapezoid weights divided by the span; they sum to one.
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(tau: &[f64]) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::invalid("empty evaluation grid"));
        }
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("evaluation grid must be strictly increasing"));
        }
        let weights = if tau.len() == 1 {
            vec![1.0]
        } else {
            let span = tau[tau.len() - 1] - tau[0];
            linalg::trapezoid_weights(tau).into_iter().map(|w| w / span).collect()
        };
        Ok(Quadrature {
            tau: tau.to_vec(),
            weights,
        })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Domain average of `f(y_j)`.
    pub fn average(&self, curve: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        self.weights.iter().zip(curve).map(|(w, &y)| w * f(y)).sum()
    }

    /// Applies a scalar functional (contrast excluded) to one curve.
    pub fn scalar(&self, spec: &FunctionalSpec, curve: &[f64]) -> Result<f64> {
        check_dim("curve length", self.tau.len(), curve.len())?;
        let v = match spec {
            FunctionalSpec::Avg => self.average(curve, |y| y),
            FunctionalSpec::Tlac => {
                if let Some(bad) = curve.iter().find(|&&y| !(y > -1.0)) {
                    return Err(Error::invalid(format!("tlac needs curve values above -1, found {bad}")));
                }
                self.average(curve, f64::ln_1p)
            }
            FunctionalSpec::Sd => {
                let avg = self.average(curve, |y| y);
                self.average(curve, |y| (y - avg) * (y - avg)).max(0.0).sqrt()
            }
            FunctionalSpec::Sedentary { threshold } => {
                let t = *threshold;
                self.average(curve, |y| if y <= t { 1.0 } else { 0.0 })
            }
            FunctionalSpec::Max => curve.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            FunctionalSpec::Argmax => self.tau[argmax_index(curve)],
            FunctionalSpec::ZerosWindow { lo, hi } => {
                let mut inside = self.tau.iter().zip(curve).filter(|(t, _)| **t >= *lo && **t <= *hi).peekable();
                if inside.peek().is_none() {
                    return Err(Error::invalid(format!("no grid points inside the window [{lo}, {hi}]")));
                }
                if inside.all(|(_, y)| y.abs() < ZERO_TOL) {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionalSpec::Contrast { .. } => {
                return Err(Error::invalid("contrast is vector valued"));
            }
        };
        Ok(v)
    }

    pub fn apply(&self, spec: &FunctionalSpec, curve: &[f64]) -> Result<FunctionalValue> {
        match spec {
            FunctionalSpec::Contrast { matrix } => {
                check_dim("contrast columns vs curve length", matrix.ncols(), curve.len())?;
                check_dim("curve length", self.tau.len(), curve.len())?;
                let out = matrix
                    .row_iter()
                    .map(|r| r.iter().zip(curve).map(|(c, y)| c * y).sum())
                    .collect();
                Ok(FunctionalValue::Vector(out))
            }
            _ => self.scalar(spec, curve).map(FunctionalValue::Scalar),
        }
    }

    /// Writes the functional outputs of `curve` into `out` (length `output_dim`).
    pub fn apply_into(&self, spec: &FunctionalSpec, curve: &[f64], out: &mut [f64]) -> Result<()> {
        match spec {
            FunctionalSpec::Contrast { matrix } => {
                check_dim("contrast columns vs curve length", matrix.ncols(), curve.len())?;
                for (o, r) in out.iter_mut().zip(matrix.row_iter()) {
                    *o = r.iter().zip(curve).map(|(c, y)| c * y).sum();
                }
            }
            _ => out[0] = self.scalar(spec, curve)?,
        }
        Ok(())
    }
}

/// First index attaining the maximum.
fn argmax_index(curve: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in curve.iter().enumerate() {
        if v > curve[best] {
            best = j;
        }
    }
    best
}

/// Applies `spec` to one curve observed on `tau`.
pub fn apply(spec: &FunctionalSpec, curve: &[f64], tau: &[f64]) -> Result<FunctionalValue> {
    Quadrature::new(tau)?.apply(spec, curve)
}

/// Functional draws `h(y_i^s)`, stored draw-major with `dim` outputs per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDraws {
    pub num_draws: usize,
    pub num_points: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FunctionalDraws {
    pub fn zeros(num_draws: usize, num_points: usize, dim: usize) -> Self {
        FunctionalDraws {
            num_draws,
            num_points,
            dim,
            data: vec![0.0; num_draws * num_points * dim],
        }
    }

    /// Wraps an `S x n` matrix of scalar functional draws.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (s, n) = m.shape();
        FunctionalDraws {
            num_draws: s,
            num_points: n,
            dim: 1,
            data: (0..s).flat_map(|r| m.row(r).iter().copied().collect::<Vec<_>>()).collect(),
        }
    }

    pub fn get(&self, s: usize, i: usize) -> &[f64] {
        let off = (s * self.num_points + i) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn cell_mut(&mut self, s: usize, i: usize) -> &mut [f64] {
        let off = (s * self.num_points + i) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    /// `S x n` matrix of output component `k`.
    pub fn component(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_draws, self.num_points, |s, i| self.get(s, i)[k])
    }

    /// `S x n` matrix of a scalar functional.
    pub fn matrix(&self) -> DMatrix<f64> {
        debug_assert_eq!(self.dim, 1);
        self.component(0)
    }

    /// Per-point mean over draws (`n x dim`).
    pub fn hbar_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.num_points, self.dim);
        for s in 0..self.num_draws {
            for i in 0..self.num_points {
                for (k, v) in self.get(s, i).iter().enumerate() {
                    out[(i, k)] += v;
                }
            }
        }
        out / self.num_draws as f64
    }

    /// Per-point mean of a scalar functional.
    pub fn hbar(&self) -> Vec<f64> {
        self.hbar_matrix().column(0).iter().copied().collect()
    }
}
