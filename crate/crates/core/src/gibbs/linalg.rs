//! Gaussian posterior of the active weights and the collapsed marginal
//! likelihood `p(Y | Z, L, nu)`, with weights and noise variance integrated
//! out. Everything is computed from Cholesky factors of
//! `Σ⁻¹ = L_rᵀ L_r + ν⁻¹ I`; `Σ` itself is never formed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use super::hyper::Hyperparameters;
use crate::basis::EvaluatedLibrary;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gram statistics of a library against its target.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionStats {
    pub gram: DMatrix<f64>,
    pub lty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl RegressionStats {
    pub fn from_library(lib: &EvaluatedLibrary) -> Self {
        Self::new(&lib.matrix, &lib.target)
    }

    pub fn new(matrix: &DMatrix<f64>, target: &DVector<f64>) -> Self {
        Self {
            gram: matrix.tr_mul(matrix),
            lty: matrix.tr_mul(target),
            yty: target.dot(target),
            n: target.len(),
        }
    }

    /// Gram statistics restricted to the columns in `active`.
    pub fn select(&self, active: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let r = active.len();
        let gram = DMatrix::from_fn(r, r, |i, j| self.gram[(active[i], active[j])]);
        let lty = DVector::from_fn(r, |i, _| self.lty[active[i]]);
        (gram, lty)
    }
}

#[derive(Debug, Clone)]
pub struct GaussianPosteriorParams {
    pub mu: DVector<f64>,
    /// Lower-triangular `C` with `C Cᵀ = Σ⁻¹`.
    pub sigma_inv_cholesky: DMatrix<f64>,
    pub log_det_sigma_inv: f64,
    /// `μᵀ Σ⁻¹ μ = (L_rᵀ Y)ᵀ μ`.
    pub mu_quad: f64,
    /// Whether the diagonal jitter fallback was needed.
    pub jittered: bool,
}

impl GaussianPosteriorParams {
    /// From the reduced Gram matrix `L_rᵀ L_r` and `L_rᵀ Y`.
    pub fn new(gram: &DMatrix<f64>, lty: &DVector<f64>, nu: f64) -> Result<Self> {
        let r = gram.nrows();
        let mut precision = gram.clone();
        for i in 0..r {
            precision[(i, i)] += 1.0 / nu;
        }
        let (chol, jittered) = match Cholesky::new(precision.clone()) {
            Some(c) => (c, false),
            None => {
                let jitter = 1e-10 * precision.trace() / r as f64;
                for i in 0..r {
                    precision[(i, i)] += jitter;
                }
                match Cholesky::new(precision) {
                    Some(c) => (c, true),
                    None => return Err(Error::CholeskyFailure { rank: r }),
                }
            }
        };
        Ok(Self::from_cholesky(chol, lty, jittered))
    }

    fn from_cholesky(chol: Cholesky<f64, Dyn>, lty: &DVector<f64>, jittered: bool) -> Self {
        let mu = chol.solve(lty);
        let l = chol.unpack();
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mu_quad = lty.dot(&mu);
        Self {
            mu,
            sigma_inv_cholesky: l,
            log_det_sigma_inv: log_det,
            mu_quad,
            jittered,
        }
    }

    pub fn rank(&self) -> usize {
        self.mu.len()
    }

    /// Draws `θ_r ~ N(μ, σ² Σ)` given standard normal variates `z`:
    /// `θ_r = μ + σ C⁻ᵀ z`.
    pub fn draw(&self, sigma2: f64, z: &DVector<f64>) -> DVector<f64> {
        let w = self
            .sigma_inv_cholesky
            .tr_solve_lower_triangular(z)
            .expect("Cholesky factor has a positive diagonal");
        &self.mu + w * sigma2.sqrt()
    }
}

/// `YᵀY − μᵀΣ⁻¹μ`, clamped at zero against round-off.
pub fn residual_quadratic(yty: f64, params: Option<&GaussianPosteriorParams>) -> f64 {
    match params {
        Some(p) => (yty - p.mu_quad).max(0.0),
        None => yty,
    }
}

/// Collapsed log marginal likelihood from sufficient statistics. `params`
/// is `None` for the empty model.
pub fn log_marginal(
    yty: f64,
    n: usize,
    params: Option<&GaussianPosteriorParams>,
    nu: f64,
    hyper: &Hyperparameters,
) -> f64 {
    let a = hyper.alpha_sigma;
    let b = hyper.beta_sigma;
    let half_n = n as f64 / 2.0;
    let q = residual_quadratic(yty, params);
    let mut ll = -half_n * LN_2PI + a * b.ln() + ln_gamma(a + half_n) - ln_gamma(a)
        - (a + half_n) * (b + 0.5 * q).ln();
    if let Some(p) = params {
        // |Σ|^{1/2} ν^{-r/2} from integrating the slab
        ll += -0.5 * p.log_det_sigma_inv - 0.5 * p.rank() as f64 * nu.ln();
    }
    ll
}

/// `log p(Y | Z, L, ν)` for the active columns of `stats`.
pub fn log_marginal_from_stats(
    stats: &RegressionStats,
    active: &[usize],
    nu: f64,
    hyper: &Hyperparameters,
) -> Result<f64> {
    if active.is_empty() {
        return Ok(log_marginal(stats.yty, stats.n, None, nu, hyper));
    }
    let (gram, lty) = stats.select(active);
    let params = GaussianPosteriorParams::new(&gram, &lty, nu)?;
    Ok(log_marginal(stats.yty, stats.n, Some(&params), nu, hyper))
}

/// `log p(Y | L_r, ν)` for a reduced library `l_r` (zero columns allowed).
pub fn log_marginal_likelihood(
    y: &DVector<f64>,
    l_r: &DMatrix<f64>,
    nu: f64,
    hyper: &Hyperparameters,
) -> Result<f64> {
    let yty = y.dot(y);
    if l_r.ncols() == 0 {
        return Ok(log_marginal(yty, y.len(), None, nu, hyper));
    }
    let params = GaussianPosteriorParams::new(&l_r.tr_mul(l_r), &l_r.tr_mul(y), nu)?;
    Ok(log_marginal(yty, y.len(), Some(&params), nu, hyper))
}

/// `log Σ exp(v)` over finite entries; `-inf` when there are none.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
