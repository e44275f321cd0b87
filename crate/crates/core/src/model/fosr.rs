//! Function-on-scalars regression with an orthonormal spline basis.
//!
//! ```text
//! y_ij     = b(tau_j)' theta_i + s_eps e_ij,     e_ij ~ t_nu (or N(0, 1))
//! theta_il = x_i' alpha_l + s_gamma_i g_il,      g_il ~ N(0, 1)
//! alpha_lj ~ N(0, s_alpha_j^2)
//! s_eps^-2, s_gamma_i^-2, s_alpha_j^-2 ~ Gamma(a, b)
//! ```
//!
//! Student-t innovations are sampled as a normal scale mixture with one
//! inverse-gamma scale `xi_ij` per observation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};

use super::basis;
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng::{self, StreamRng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct FosrModel {
    /// m x L basis with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Degrees of freedom of the innovations; `None` means Gaussian.
    pub t_dof: Option<f64>,
    pub hyper_a: f64,
    pub hyper_b: f64,
}

impl FosrModel {
    pub const DEFAULT_T_DOF: f64 = 3.0;
    pub const DEFAULT_HYPER: f64 = 0.01;

    /// Cubic spline model on `tau`; `num_basis` defaults to `min(15, ceil(m / 4))`.
    pub fn new(tau: &[f64], num_basis: Option<usize>, t_dof: Option<f64>) -> Result<Self> {
        let l = num_basis.unwrap_or_else(|| basis::default_num_basis(tau.len()));
        Self::from_orthonormal(basis::orthonormal_basis(tau, l)?, t_dof)
    }

    /// Orthonormalizes an arbitrary raw basis (`m x L`).
    pub fn with_raw_basis(raw: &DMatrix<f64>, t_dof: Option<f64>) -> Result<Self> {
        Self::from_orthonormal(basis::orthonormalize(raw)?, t_dof)
    }

    pub(crate) fn from_orthonormal(basis: DMatrix<f64>, t_dof: Option<f64>) -> Result<Self> {
        if let Some(nu) = t_dof {
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(Error::invalid(format!("t degrees of freedom must be positive, got {nu}")));
            }
        }
        Ok(FosrModel {
            basis,
            t_dof,
            hyper_a: Self::DEFAULT_HYPER,
            hyper_b: Self::DEFAULT_HYPER,
        })
    }

    pub fn num_basis(&self) -> usize {
        self.basis.ncols()
    }

    pub fn m(&self) -> usize {
        self.basis.nrows()
    }

    /// Log density of one residual under the innovation distribution.
    fn log_density(&self, resid: f64, sigma2: f64) -> f64 {
        match self.t_dof {
            None => -0.5 * (LN_2PI + sigma2.ln() + resid * resid / sigma2),
            Some(nu) => {
                libm::lgamma(0.5 * (nu + 1.0)) - libm::lgamma(0.5 * nu)
                    - 0.5 * (nu * std::f64::consts::PI * sigma2).ln()
                    - 0.5 * (nu + 1.0) * (resid * resid / (nu * sigma2)).ln_1p()
            }
        }
    }

    fn sample_innovation(&self, rng: &mut StreamRng) -> f64 {
        match self.t_dof {
            None => rng.sample(StandardNormal),
            // dof validated at construction
            Some(nu) => StudentT::new(nu).expect("validated dof").sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GibbsConfig {
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iters: 10_000,
            burnin: 5_000,
            seed: 0,
        }
    }
}

/// Retained Gibbs draws. All per-draw blocks are stored draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FosrDraws {
    pub model: FosrModel,
    pub num_draws: usize,
    /// Number of subjects.
    pub n: usize,
    /// Number of design columns (intercept included).
    pub q: usize,
    /// Per draw a `q x L` row-major block: entry `(j, l)` is `alpha_lj`.
    pub alpha: Vec<f64>,
    /// Per draw an `n x L` row-major block of subject coefficients.
    pub theta: Vec<f64>,
    pub sigma_eps2: Vec<f64>,
    /// Per draw `n` subject-level variances.
    pub sigma_gamma2: Vec<f64>,
    /// Per draw `q` coefficient prior variances.
    pub sigma_alpha2: Vec<f64>,
}

impl FosrDraws {
    pub fn l(&self) -> usize {
        self.model.num_basis()
    }

    pub fn theta(&self, s: usize, i: usize) -> &[f64] {
        let l = self.l();
        let off = (s * self.n + i) * l;
        &self.theta[off..off + l]
    }

    pub fn alpha(&self, s: usize) -> &[f64] {
        let w = self.q * self.l();
        &self.alpha[s * w..(s + 1) * w]
    }

    /// Regression-layer mean of the basis coefficients, `A' x`.
    pub fn coef_mean(&self, s: usize, x: &[f64]) -> Vec<f64> {
        let l = self.l();
        let a = self.alpha(s);
        let mut out = vec![0.0; l];
        for (j, xj) in x.iter().enumerate() {
            for (o, av) in out.iter_mut().zip(&a[j * l..(j + 1) * l]) {
                *o += xj * av;
            }
        }
        out
    }

    /// `B theta` written into `out`.
    pub fn curve_from_coefs(&self, coefs: &[f64], out: &mut [f64]) {
        let b = &self.model.basis;
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, th) in coefs.iter().enumerate() {
                acc += b[(r, c)] * th;
            }
            *o = acc;
        }
    }

    /// Adds innovation noise at draw `s` to a mean curve.
    pub fn add_noise(&self, s: usize, curve: &mut [f64], rng: &mut StreamRng) {
        let sd = self.sigma_eps2[s].sqrt();
        for v in curve.iter_mut() {
            *v += sd * self.model.sample_innovation(rng);
        }
    }

    /// Coefficients for a new subject at covariates `x`; the subject-level
    /// scale is borrowed from a uniformly chosen observed subject.
    pub fn new_subject_coefs(&self, s: usize, x: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        let mut c = self.coef_mean(s, x);
        let donor = rng.random_range(0..self.n);
        let sd = self.sigma_gamma2[s * self.n + donor].sqrt();
        for v in c.iter_mut() {
            *v += sd * rng.sample::<f64, _>(StandardNormal);
        }
        c
    }

    /// `log p(y_i | theta^s)` for every draw and subject (S x n).
    pub fn log_lik_matrix(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("response rows", self.n, y.nrows())?;
        check_dim("response columns", self.model.m(), y.ncols())?;
        let (m, l) = (self.model.m(), self.l());
        let mut out = DMatrix::zeros(self.num_draws, self.n);
        match self.model.t_dof {
            None => {
                // Orthogonal decomposition: ||y - B th||^2 = ||(I - BB')y||^2 + ||B'y - th||^2
                let by = y * &self.model.basis;
                let perp: Vec<f64> = (0..self.n)
                    .map(|i| {
                        let yi = y.row(i).transpose();
                        let fit = &self.model.basis * by.row(i).transpose();
                        (yi - fit).norm_squared()
                    })
                    .collect();
                for s in 0..self.num_draws {
                    let s2 = self.sigma_eps2[s];
                    let konst = -0.5 * m as f64 * (LN_2PI + s2.ln());
                    for i in 0..self.n {
                        let th = self.theta(s, i);
                        let mut ss = perp[i];
                        for c in 0..l {
                            let d = by[(i, c)] - th[c];
                            ss += d * d;
                        }
                        out[(s, i)] = konst - 0.5 * ss / s2;
                    }
                }
            }
            Some(_) => {
                let mut curve = vec![0.0; m];
                for s in 0..self.num_draws {
                    let s2 = self.sigma_eps2[s];
                    for i in 0..self.n {
                        self.curve_from_coefs(self.theta(s, i), &mut curve);
                        out[(s, i)] = curve
                            .iter()
                            .zip(y.row(i).iter())
                            .map(|(mu, yv)| self.model.log_density(yv - mu, s2))
                            .sum();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Split-chain potential scale reduction of the noise standard deviation.
    pub fn rhat_sigma_eps(&self) -> f64 {
        let sd: Vec<f64> = self.sigma_eps2.iter().map(|v| v.sqrt()).collect();
        split_rhat(&sd)
    }
}

/// Split-R-hat of a single chain (halves treated as two chains).
pub fn split_rhat(chain: &[f64]) -> f64 {
    let half = chain.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts = [&chain[..half], &chain[chain.len() - half..]];
    let means: Vec<f64> = parts.iter().map(|c| linalg::mean(c)).collect();
    let vars: Vec<f64> = parts.iter().map(|c| linalg::sample_sd(c).powi(2)).collect();
    let nh = half as f64;
    let grand = linalg::mean(&means);
    let b = nh * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let w = linalg::mean(&vars);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (nh - 1.0) / nh * w + b / nh;
    (var_plus / w).sqrt()
}

fn gamma_precision(shape: f64, rate: f64, rng: &mut StreamRng) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::NonFinite(format!("gamma({shape}, {rate}): {e}")))?;
    let v: f64 = g.sample(rng);
    Ok(v.max(f64::MIN_POSITIVE))
}

fn check_variance(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name} draw {v}")))
    }
}

/// Runs the Gibbs sampler and keeps the last `iters - burnin` draws.
pub fn gibbs_fosr(data: &Dataset, model: &FosrModel, cfg: &GibbsConfig) -> Result<FosrDraws> {
    let n = data.y.nrows();
    if n < 2 {
        return Err(Error::invalid("the regression layer needs at least two subjects"));
    }
    if cfg.iters <= cfg.burnin {
        return Err(Error::invalid("iters must exceed burnin"));
    }
    check_dim("basis rows vs response grid", data.y.ncols(), model.m())?;
    let x = data.design();
    let q = x.ncols();
    let l = model.num_basis();
    let m = model.m();
    let b = &model.basis;
    let y = &data.y;
    let (ha, hb) = (model.hyper_a, model.hyper_b);
    let mut rng = rng::stream(cfg.seed, 0);

    // Sufficient statistics under Gaussian innovations.
    let by = y * b; // n x L
    let perp_total: f64 = (0..n)
        .map(|i| (y.row(i).transpose() - b * by.row(i).transpose()).norm_squared())
        .sum();

    // Initialization from least-squares projections.
    let mut theta = by.clone();
    let mut a_mat = DMatrix::zeros(q, l);
    {
        let (chol, _) = linalg::cholesky_ridged(&x.tr_mul(&x), 1e-6, "initial regression layer")?;
        a_mat.copy_from(&chol.solve(&x.tr_mul(&theta)));
    }
    let mut sigma_gamma2: Vec<f64> = (0..n)
        .map(|i| {
            let r = theta.row(i) - x.row(i) * &a_mat;
            (r.norm_squared() / l as f64).max(1e-8)
        })
        .collect();
    let mut sigma_alpha2: Vec<f64> = (0..q)
        .map(|j| (a_mat.row(j).norm_squared() / l as f64).max(1e-8))
        .collect();
    let dof_resid = (n * m).saturating_sub(n * l).max(1) as f64;
    let mut sigma_eps2 = (perp_total / dof_resid).max(1e-8);
    let mut xi = match model.t_dof {
        Some(_) => DMatrix::from_element(n, m, 1.0),
        None => DMatrix::zeros(0, 0),
    };

    let keep = cfg.iters - cfg.burnin;
    let mut out = FosrDraws {
        model: model.clone(),
        num_draws: keep,
        n,
        q,
        alpha: Vec::with_capacity(keep * q * l),
        theta: Vec::with_capacity(keep * n * l),
        sigma_eps2: Vec::with_capacity(keep),
        sigma_gamma2: Vec::with_capacity(keep * n),
        sigma_alpha2: Vec::with_capacity(keep * q),
    };

    let mut resid = vec![0.0; m];
    for it in 0..cfg.iters {
        // theta_i | rest
        let xa = &x * &a_mat;
        for i in 0..n {
            let sg2 = sigma_gamma2[i];
            match model.t_dof {
                None => {
                    let prec = 1.0 / sigma_eps2 + 1.0 / sg2;
                    let sd = prec.sqrt().recip();
                    for c in 0..l {
                        let mean = (by[(i, c)] / sigma_eps2 + xa[(i, c)] / sg2) / prec;
                        theta[(i, c)] = mean + sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                Some(_) => {
                    let mut prec = DMatrix::<f64>::zeros(l, l);
                    let mut rhs = DVector::<f64>::zeros(l);
                    for r in 0..m {
                        let w = 1.0 / (sigma_eps2 * xi[(i, r)]);
                        let yr = y[(i, r)] * w;
                        for c1 in 0..l {
                            let bw = b[(r, c1)] * w;
                            rhs[c1] += b[(r, c1)] * yr;
                            for c2 in 0..=c1 {
                                prec[(c1, c2)] += bw * b[(r, c2)];
                            }
                        }
                    }
                    for c1 in 0..l {
                        for c2 in 0..c1 {
                            prec[(c2, c1)] = prec[(c1, c2)];
                        }
                        prec[(c1, c1)] += 1.0 / sg2;
                        rhs[c1] += xa[(i, c1)] / sg2;
                    }
                    let chol = linalg::cholesky(prec, "subject coefficient precision")?;
                    let mean = chol.solve(&rhs);
                    let draw = linalg::sample_from_precision(&chol, &mean, &mut rng);
                    theta.row_mut(i).copy_from(&draw.transpose());
                }
            }
        }

        // alpha | theta, scales: one shared precision for every basis index.
        let mut xtd = x.transpose();
        for i in 0..n {
            let w = 1.0 / sigma_gamma2[i];
            xtd.column_mut(i).scale_mut(w);
        }
        let mut prec = &xtd * &x;
        for j in 0..q {
            prec[(j, j)] += 1.0 / sigma_alpha2[j];
        }
        let chol = linalg::cholesky(prec, "regression coefficient precision")?;
        let mean = chol.solve(&(&xtd * &theta));
        let lfac = chol.l_dirty();
        let mut z = DMatrix::from_fn(q, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        lfac.tr_solve_lower_triangular_mut(&mut z);
        a_mat = mean + z;

        // subject-level and coefficient-level variances
        let xa = &x * &a_mat;
        for i in 0..n {
            let ss = (theta.row(i) - xa.row(i)).norm_squared();
            let p = gamma_precision(ha + 0.5 * l as f64, hb + 0.5 * ss, &mut rng)?;
            sigma_gamma2[i] = check_variance("subject variance", 1.0 / p)?;
        }
        for j in 0..q {
            let ss = a_mat.row(j).norm_squared();
            let p = gamma_precision(ha + 0.5 * l as f64, hb + 0.5 * ss, &mut rng)?;
            sigma_alpha2[j] = check_variance("coefficient variance", 1.0 / p)?;
        }

        // noise variance (and latent t scales)
        let ss = match model.t_dof {
            None => {
                let mut ss = perp_total;
                for i in 0..n {
                    for c in 0..l {
                        let d = by[(i, c)] - theta[(i, c)];
                        ss += d * d;
                    }
                }
                ss
            }
            Some(_) => {
                let mut ss = 0.0;
                for i in 0..n {
                    fill_residual(y, b, &theta, i, &mut resid);
                    for (r, e) in resid.iter().enumerate() {
                        ss += e * e / xi[(i, r)];
                    }
                }
                ss
            }
        };
        let p = gamma_precision(ha + 0.5 * (n * m) as f64, hb + 0.5 * ss, &mut rng)?;
        sigma_eps2 = check_variance("noise variance", 1.0 / p)?;

        if let Some(nu) = model.t_dof {
            for i in 0..n {
                fill_residual(y, b, &theta, i, &mut resid);
                for (r, e) in resid.iter().enumerate() {
                    let p = gamma_precision(0.5 * (nu + 1.0), 0.5 * (nu + e * e / sigma_eps2), &mut rng)?;
                    xi[(i, r)] = check_variance("latent scale", 1.0 / p)?;
                }
            }
        }

        if it >= cfg.burnin {
            for j in 0..q {
                out.alpha.extend(a_mat.row(j).iter());
            }
            for i in 0..n {
                out.theta.extend(theta.row(i).iter());
            }
            out.sigma_eps2.push(sigma_eps2);
            out.sigma_gamma2.extend_from_slice(&sigma_gamma2);
            out.sigma_alpha2.extend_from_slice(&sigma_alpha2);
        }
    }
    Ok(out)
}

fn fill_residual(y: &DMatrix<f64>, b: &DMatrix<f64>, theta: &DMatrix<f64>, i: usize, out: &mut [f64]) {
    let l = b.ncols();
    for (r, o) in out.iter_mut().enumerate() {
        let mut fit = 0.0;
        for c in 0..l {
            fit += b[(r, c)] * theta[(i, c)];
        }
        *o = y[(i, r)] - fit;
    }
}
