//! Model-agnostic view of posterior draws and their on-disk archive.
//!
//! An archive is a flat little-endian `f64` file plus a JSON sidecar naming
//! each field and its shape, in storage order.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::conjugate::ConjugateDraws;
use super::fosr::{FosrDraws, FosrModel};
use crate::data::{self, Dataset};
use crate::error::{check_dim, Error, Result};

pub const DRAWS_SCHEMA: &str = "targetpred.draws.v1";

#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorDrawSet {
    Conjugate(ConjugateDraws),
    Fosr(FosrDraws),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldLayout {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveSidecar {
    pub schema: String,
    pub model: String,
    pub draws: usize,
    pub binary: String,
    pub fields: Vec<FieldLayout>,
    #[serde(default)]
    pub t_dof: Option<f64>,
    #[serde(default)]
    pub hyper_a: Option<f64>,
    #[serde(default)]
    pub hyper_b: Option<f64>,
}

impl PosteriorDrawSet {
    pub fn num_draws(&self) -> usize {
        match self {
            PosteriorDrawSet::Conjugate(d) => d.num_draws(),
            PosteriorDrawSet::Fosr(d) => d.num_draws,
        }
    }

    pub fn model_name(&self) -> &'static str {
        match self {
            PosteriorDrawSet::Conjugate(_) => "conjugate",
            PosteriorDrawSet::Fosr(_) => "fosr",
        }
    }

    /// Number of design columns the model was fitted on (intercept included).
    pub fn design_dim(&self) -> usize {
        match self {
            PosteriorDrawSet::Conjugate(d) => d.dim(),
            PosteriorDrawSet::Fosr(d) => d.q,
        }
    }

    /// Length of one response curve.
    pub fn curve_len(&self) -> usize {
        match self {
            PosteriorDrawSet::Conjugate(_) => 1,
            PosteriorDrawSet::Fosr(d) => d.model.m(),
        }
    }

    /// `log p(y_i | theta^s)` as an `S x n` matrix.
    pub fn log_lik_matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        match self {
            PosteriorDrawSet::Conjugate(d) => {
                check_dim("conjugate response columns", 1, data.m())?;
                let x = data.design();
                check_dim("design columns", d.dim(), x.ncols())?;
                let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
                let mut out = DMatrix::zeros(d.num_draws(), data.n());
                for s in 0..d.num_draws() {
                    for (i, row) in rows.iter().enumerate() {
                        out[(s, i)] = d.log_lik(s, row, data.y[(i, 0)]);
                    }
                }
                Ok(out)
            }
            PosteriorDrawSet::Fosr(d) => {
                check_dim("design columns", d.q, data.p() + 1)?;
                d.log_lik_matrix(&data.y)
            }
        }
    }

    /// Checks the structural invariants of a draw set.
    pub fn validate(&self) -> Result<()> {
        if self.num_draws() == 0 {
            return Err(Error::invalid("posterior draw set is empty"));
        }
        let (coefs, vars): (Vec<&[f64]>, Vec<&[f64]>) = match self {
            PosteriorDrawSet::Conjugate(d) => (vec![d.beta.as_slice()], vec![d.sigma2.as_slice()]),
            PosteriorDrawSet::Fosr(d) => (
                vec![&d.alpha, &d.theta],
                vec![&d.sigma_eps2, &d.sigma_gamma2, &d.sigma_alpha2],
            ),
        };
        if coefs.iter().flat_map(|c| c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient draws".into()));
        }
        if vars.iter().flat_map(|c| c.iter()).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::NonFinite("variance draws must be finite and positive".into()));
        }
        Ok(())
    }

    fn fields(&self) -> Vec<(&'static str, Vec<usize>, Vec<f64>)> {
        let s = self.num_draws();
        match self {
            PosteriorDrawSet::Conjugate(d) => {
                // beta is column-major in nalgebra; store row-major per draw
                let beta: Vec<f64> = (0..s).flat_map(|r| d.beta.row(r).iter().copied().collect::<Vec<_>>()).collect();
                vec![
                    ("beta", vec![s, d.dim()], beta),
                    ("sigma2", vec![s], d.sigma2.as_slice().to_vec()),
                ]
            }
            PosteriorDrawSet::Fosr(d) => {
                let (m, l) = d.model.basis.shape();
                let basis: Vec<f64> = (0..m).flat_map(|r| d.model.basis.row(r).iter().copied().collect::<Vec<_>>()).collect();
                vec![
                    ("basis", vec![m, l], basis),
                    ("alpha", vec![s, d.q, l], d.alpha.clone()),
                    ("theta", vec![s, d.n, l], d.theta.clone()),
                    ("sigma_eps2", vec![s], d.sigma_eps2.clone()),
                    ("sigma_gamma2", vec![s, d.n], d.sigma_gamma2.clone()),
                    ("sigma_alpha2", vec![s, d.q], d.sigma_alpha2.clone()),
                ]
            }
        }
    }

    /// Writes `<sidecar>` (JSON) and a sibling `.bin` file.
    pub fn save(&self, sidecar: &Path) -> Result<()> {
        let fields = self.fields();
        let bin_name = format!(
            "{}.bin",
            sidecar.file_stem().and_then(|s| s.to_str()).unwrap_or("draws")
        );
        let mut bytes = Vec::with_capacity(fields.iter().map(|f| f.2.len() * 8).sum());
        for (_, _, vals) in &fields {
            for v in vals {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let bin_path = data::sibling(sidecar, &bin_name);
        fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
        let (t_dof, hyper_a, hyper_b) = match self {
            PosteriorDrawSet::Fosr(d) => (d.model.t_dof, Some(d.model.hyper_a), Some(d.model.hyper_b)),
            PosteriorDrawSet::Conjugate(_) => (None, None, None),
        };
        let meta = ArchiveSidecar {
            schema: DRAWS_SCHEMA.into(),
            model: self.model_name().into(),
            draws: self.num_draws(),
            binary: bin_name,
            fields: fields
                .into_iter()
                .map(|(name, shape, _)| FieldLayout { name: name.into(), shape })
                .collect(),
            t_dof,
            hyper_a,
            hyper_b,
        };
        data::write_json(sidecar, &meta)
    }

    pub fn load(sidecar: &Path) -> Result<Self> {
        let meta: ArchiveSidecar = data::read_json(sidecar)?;
        if meta.schema != DRAWS_SCHEMA {
            return Err(Error::format(sidecar, format!("unexpected schema `{}`", meta.schema)));
        }
        let bin_path = data::sibling(sidecar, &meta.binary);
        let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let total: usize = meta.fields.iter().map(|f| f.shape.iter().product::<usize>()).sum();
        if bytes.len() != total * 8 {
            return Err(Error::format(&bin_path, format!("expected {} bytes, found {}", total * 8, bytes.len())));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let take = |name: &str, rank: usize| -> Result<(Vec<usize>, Vec<f64>)> {
            let f = meta
                .fields
                .iter()
                .find(|f| f.name == name)
                .ok_or_else(|| Error::format(sidecar, format!("missing field `{name}`")))?;
            if f.shape.len() != rank {
                return Err(Error::format(sidecar, format!("field `{name}` should have rank {rank}")));
            }
            // fields are stored in sidecar order
            let start: usize = meta
                .fields
                .iter()
                .take_while(|g| g.name != name)
                .map(|g| g.shape.iter().product::<usize>())
                .sum();
            let len: usize = f.shape.iter().product();
            Ok((f.shape.clone(), values[start..start + len].to_vec()))
        };
        let s = meta.draws;
        let bad = |msg: &str| Error::format(sidecar, msg.to_string());
        let set = match meta.model.as_str() {
            "conjugate" => {
                let (bs, beta) = take("beta", 2)?;
                let (ss, sigma2) = take("sigma2", 1)?;
                if bs[0] != s || ss[0] != s {
                    return Err(bad("draw counts disagree"));
                }
                PosteriorDrawSet::Conjugate(ConjugateDraws {
                    beta: DMatrix::from_row_slice(s, bs[1], &beta),
                    sigma2: DVector::from_vec(sigma2),
                })
            }
            "fosr" => {
                let (bsh, basis) = take("basis", 2)?;
                let (ash, alpha) = take("alpha", 3)?;
                let (tsh, theta) = take("theta", 3)?;
                let (_, sigma_eps2) = take("sigma_eps2", 1)?;
                let (_, sigma_gamma2) = take("sigma_gamma2", 2)?;
                let (_, sigma_alpha2) = take("sigma_alpha2", 2)?;
                let (m, l) = (bsh[0], bsh[1]);
                let (q, n) = (ash[1], tsh[1]);
                if ash != [s, q, l] || tsh != [s, n, l] || sigma_eps2.len() != s || sigma_gamma2.len() != s * n || sigma_alpha2.len() != s * q {
                    return Err(bad("field shapes disagree"));
                }
                let mut model = FosrModel::from_orthonormal(DMatrix::from_row_slice(m, l, &basis), meta.t_dof)?;
                model.hyper_a = meta.hyper_a.unwrap_or(FosrModel::DEFAULT_HYPER);
                model.hyper_b = meta.hyper_b.unwrap_or(FosrModel::DEFAULT_HYPER);
                PosteriorDrawSet::Fosr(FosrDraws {
                    model,
                    num_draws: s,
                    n,
                    q,
                    alpha,
                    theta,
                    sigma_eps2,
                    sigma_gamma2,
                    sigma_alpha2,
                })
            }
            other => return Err(Error::format(sidecar, format!("unknown model `{other}`"))),
        };
        set.validate()?;
        Ok(set)
    }
}

impl From<ConjugateDraws> for PosteriorDrawSet {
    fn from(d: ConjugateDraws) -> Self {
        PosteriorDrawSet::Conjugate(d)
    }
}

impl From<FosrDraws> for PosteriorDrawSet {
    fn from(d: FosrDraws) -> Self {
        PosteriorDrawSet::Fosr(d)
    }
}
