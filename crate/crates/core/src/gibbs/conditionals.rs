//! Full conditional draws for the inclusion indicators, the noise and slab
//! variances, the inclusion rate, the weights and the delay-index weights.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use super::hyper::Hyperparameters;
use super::linalg::{log_marginal_from_stats, residual_quadratic, GaussianPosteriorParams, RegressionStats};
use crate::error::{Error, Result};

/// `x ~ IG(shape, scale)` via `1 / Gamma(shape, 1 / scale)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale)
        .expect("positive inverse-gamma parameters")
        .sample(rng);
    1.0 / g.max(f64::MIN_POSITIVE)
}

pub fn active_indices(z: &[bool]) -> Vec<usize> {
    z.iter().enumerate().filter(|(_, &on)| on).map(|(i, _)| i).collect()
}

/// `P(Z_k = 1 | ...)` from the two log marginal likelihoods, evaluated as
/// `1 / (1 + exp(log λ + log(1 - p0) - log p0))` with `λ = p(Y|Z_k=0) / p(Y|Z_k=1)`.
pub fn inclusion_probability(log_ml_in: f64, log_ml_out: f64, p0: f64) -> f64 {
    let log_lambda = log_ml_out - log_ml_in;
    let e = log_lambda + (1.0 - p0).ln() - p0.ln();
    1.0 / (1.0 + e.exp())
}

/// One sweep over the indicators in catalog order. Columns in `clamped`
/// stay excluded.
pub fn sample_z<R: Rng + ?Sized>(
    z: &mut [bool],
    stats: &RegressionStats,
    nu: f64,
    p0: f64,
    clamped: &[bool],
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<()> {
    for k in 0..z.len() {
        if clamped[k] {
            z[k] = false;
            continue;
        }
        z[k] = true;
        let ll_in = log_marginal_from_stats(stats, &active_indices(z), nu, hyper)?;
        z[k] = false;
        let ll_out = log_marginal_from_stats(stats, &active_indices(z), nu, hyper)?;
        let mu = inclusion_probability(ll_in, ll_out, p0);
        z[k] = rng.random::<f64>() < mu;
    }
    Ok(())
}

/// Posterior parameters of the active weights, `None` when nothing is active.
pub fn posterior_params(stats: &RegressionStats, z: &[bool], nu: f64) -> Result<Option<GaussianPosteriorParams>> {
    let active = active_indices(z);
    if active.is_empty() {
        return Ok(None);
    }
    let (gram, lty) = stats.select(&active);
    GaussianPosteriorParams::new(&gram, &lty, nu).map(Some)
}

/// Shape and scale of the noise-variance conditional:
/// `IG(α_σ + (r + N)/2, β_σ + (YᵀY − μᵀΣ⁻¹μ)/2)`.
pub fn sigma2_conditional(
    stats: &RegressionStats,
    params: Option<&GaussianPosteriorParams>,
    hyper: &Hyperparameters,
) -> (f64, f64) {
    let r = params.map_or(0, GaussianPosteriorParams::rank);
    let q = residual_quadratic(stats.yty, params);
    (
        hyper.alpha_sigma + (r + stats.n) as f64 / 2.0,
        hyper.beta_sigma + q / 2.0,
    )
}

pub fn sample_sigma2<R: Rng + ?Sized>(
    stats: &RegressionStats,
    params: Option<&GaussianPosteriorParams>,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> f64 {
    let (shape, scale) = sigma2_conditional(stats, params, hyper);
    sample_inverse_gamma(shape, scale, rng)
}

/// `IG(α_ν + r/2, β_ν + θ_rᵀθ_r / (2σ²))` with `θ_r` the weights at the
/// active positions of `z`.
pub fn nu_conditional(z: &[bool], theta: &[f64], sigma2: f64, hyper: &Hyperparameters) -> (f64, f64) {
    let active = active_indices(z);
    let ss: f64 = active.iter().map(|&k| theta[k] * theta[k]).sum();
    (
        hyper.alpha_nu + active.len() as f64 / 2.0,
        hyper.beta_nu + ss / (2.0 * sigma2),
    )
}

pub fn sample_nu<R: Rng + ?Sized>(
    z: &[bool],
    theta: &[f64],
    sigma2: f64,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> f64 {
    let (shape, scale) = nu_conditional(z, theta, sigma2, hyper);
    sample_inverse_gamma(shape, scale, rng)
}

/// `Beta(α_p + h, β_p + K − h)` with `h = Σ Z_k`.
pub fn p0_conditional(z: &[bool], hyper: &Hyperparameters) -> (f64, f64) {
    let h = z.iter().filter(|&&v| v).count() as f64;
    (hyper.alpha_p + h, hyper.beta_p + z.len() as f64 - h)
}

/// Draws are kept strictly inside (0, 1) so their logs stay finite.
pub fn sample_p0<R: Rng + ?Sized>(z: &[bool], hyper: &Hyperparameters, rng: &mut R) -> f64 {
    let (a, b) = p0_conditional(z, hyper);
    let p: f64 = Beta::new(a, b).expect("positive beta parameters").sample(rng);
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Full weight vector with exact zeros outside the active set.
pub fn sample_theta<R: Rng + ?Sized>(
    z: &[bool],
    params: Option<&GaussianPosteriorParams>,
    sigma2: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut theta = vec![0.0; z.len()];
    let Some(params) = params else {
        return theta;
    };
    let normals = DVector::from_fn(params.rank(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let draw = params.draw(sigma2, &normals);
    for (slot, &k) in active_indices(z).iter().enumerate() {
        theta[k] = draw[slot];
    }
    theta
}

/// Dirichlet draw by normalizing independent Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut g = concentration
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .map(|d| d.sample(rng))
                .map_err(|_| Error::Config(format!("invalid Dirichlet concentration {a}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = g.iter().sum();
    if !(total > 0.0) {
        // every variate underflowed; fall back to the mean
        let s: f64 = concentration.iter().sum();
        return Ok(concentration.iter().map(|a| a / s).collect());
    }
    g.iter_mut().for_each(|v| *v /= total);
    Ok(g)
}
