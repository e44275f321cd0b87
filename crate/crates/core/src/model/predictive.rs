//! Posterior predictive simulation.
//!
//! The draw for posterior draw `s` at design row `i` uses its own random
//! stream `(seed, s * n_design + i)`, so a functional can be computed curve by
//! curve without materializing the full `S x n x m` array and still agree
//! exactly with the materialized version.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::draws::PosteriorDrawSet;
use crate::error::{check_dim, Error, Result};
use crate::functionals::{FunctionalDraws, FunctionalSpec, Quadrature};
use crate::rng::{self, StreamRng};

/// How subject-level effects enter a functional-regression prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveMode {
    /// Replicate curves of the observed subjects, `y_i ~ p(y | theta_i^s)`;
    /// design row `i` must be observed subject `i`.
    #[default]
    Replicate,
    /// Curves of new subjects with a freshly drawn subject effect.
    NewSubject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDrawSet {
    pub num_draws: usize,
    pub design: DMatrix<f64>,
    /// Curve length.
    pub m: usize,
    /// Draw-major `S x n x m` values.
    pub draws: Vec<f64>,
}

impl PredictiveDrawSet {
    pub fn num_points(&self) -> usize {
        self.design.nrows()
    }

    pub fn curve(&self, s: usize, i: usize) -> &[f64] {
        let off = (s * self.num_points() + i) * self.m;
        &self.draws[off..off + self.m]
    }
}

/// Per-draw sampler of predictive curves on a fixed design.
pub struct CurveSampler<'a> {
    post: &'a PosteriorDrawSet,
    rows: Vec<Vec<f64>>,
    mode: PredictiveMode,
    seed: u64,
}

impl<'a> CurveSampler<'a> {
    pub fn new(post: &'a PosteriorDrawSet, design: &DMatrix<f64>, mode: PredictiveMode, seed: u64) -> Result<Self> {
        check_dim("predictive design columns", post.design_dim(), design.ncols())?;
        if let (PosteriorDrawSet::Fosr(d), PredictiveMode::Replicate) = (post, mode) {
            check_dim("replicate-mode design rows (observed subjects)", d.n, design.nrows())?;
        }
        Ok(CurveSampler {
            post,
            rows: design.row_iter().map(|r| r.iter().copied().collect()).collect(),
            mode,
            seed,
        })
    }

    pub fn num_points(&self) -> usize {
        self.rows.len()
    }

    fn rng(&self, s: usize, i: usize) -> StreamRng {
        rng::stream(self.seed, (s * self.rows.len() + i) as u64)
    }

    /// Writes the predictive curve for draw `s`, design row `i` into `out`.
    pub fn sample_into(&self, s: usize, i: usize, out: &mut [f64]) {
        let mut r = self.rng(s, i);
        match self.post {
            PosteriorDrawSet::Conjugate(d) => {
                let z: f64 = r.sample(StandardNormal);
                out[0] = d.mean_at(s, &self.rows[i]) + d.sigma2[s].sqrt() * z;
            }
            PosteriorDrawSet::Fosr(d) => {
                match self.mode {
                    PredictiveMode::Replicate => d.curve_from_coefs(d.theta(s, i), out),
                    PredictiveMode::NewSubject => {
                        let c = d.new_subject_coefs(s, &self.rows[i], &mut r);
                        d.curve_from_coefs(&c, out);
                    }
                }
                d.add_noise(s, out, &mut r);
            }
        }
    }
}

/// One predictive curve per posterior draw per design row.
pub fn predictive_draws(
    post: &PosteriorDrawSet,
    design: &DMatrix<f64>,
    mode: PredictiveMode,
    seed: u64,
) -> Result<PredictiveDrawSet> {
    let sampler = CurveSampler::new(post, design, mode, seed)?;
    let (s_count, n, m) = (post.num_draws(), design.nrows(), post.curve_len());
    let mut draws = vec![0.0; s_count * n * m];
    if n * m > 0 {
        draws.par_chunks_mut(n * m).enumerate().for_each(|(s, block)| {
            for (i, out) in block.chunks_mut(m).enumerate() {
                sampler.sample_into(s, i, out);
            }
        });
    }
    Ok(PredictiveDrawSet {
        num_draws: s_count,
        design: design.clone(),
        m,
        draws,
    })
}

/// `h(y_i^s)` over a materialized predictive draw set.
pub fn apply_to_draws(spec: &FunctionalSpec, preds: &PredictiveDrawSet, tau: &[f64]) -> Result<FunctionalDraws> {
    check_dim("curve length vs grid", tau.len(), preds.m)?;
    let quad = Quadrature::new(tau)?;
    let n = preds.num_points();
    let mut out = FunctionalDraws::zeros(preds.num_draws, n, spec.output_dim());
    for s in 0..preds.num_draws {
        for i in 0..n {
            quad.apply_into(spec, preds.curve(s, i), out.cell_mut(s, i))?;
        }
    }
    Ok(out)
}

/// Per-design-point posterior predictive mean of a scalar functional.
pub fn hbar(spec: &FunctionalSpec, preds: &PredictiveDrawSet, tau: &[f64]) -> Result<Vec<f64>> {
    let f = apply_to_draws(spec, preds, tau)?;
    if f.dim != 1 {
        return Err(Error::invalid("hbar needs a scalar functional; use hbar_matrix for contrasts"));
    }
    Ok(f.hbar())
}

/// Functional draws computed curve by curve; equal to
/// `apply_to_draws(spec, predictive_draws(..))` without storing the curves.
pub fn functional_draws(
    post: &PosteriorDrawSet,
    design: &DMatrix<f64>,
    mode: PredictiveMode,
    seed: u64,
    spec: &FunctionalSpec,
    tau: &[f64],
) -> Result<FunctionalDraws> {
    check_dim("curve length vs grid", tau.len(), post.curve_len())?;
    let sampler = CurveSampler::new(post, design, mode, seed)?;
    let quad = Quadrature::new(tau)?;
    let (s_count, n, m, dim) = (post.num_draws(), design.nrows(), post.curve_len(), spec.output_dim());
    let mut out = FunctionalDraws::zeros(s_count, n, dim);
    if n * dim == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(n * dim)
        .enumerate()
        .try_for_each(|(s, block)| -> Result<()> {
            let mut curve = vec![0.0; m];
            for (i, cell) in block.chunks_mut(dim).enumerate() {
                sampler.sample_into(s, i, &mut curve);
                quad.apply_into(spec, &curve, cell)?;
            }
            Ok(())
        })?;
    Ok(out)
}
