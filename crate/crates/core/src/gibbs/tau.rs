//! Delay-index step: multinomial draw over a shrinking window.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hyper::Hyperparameters;
use super::linalg::{log_marginal, log_sum_exp, GaussianPosteriorParams};
use crate::basis::{LibraryBuilder, RowRange};
use crate::error::Result;

pub const DEFAULT_SHRINK_THRESHOLD: f64 = 1e-100;

/// Inclusive delay-index bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lower: usize,
    pub upper: usize,
}

impl Window {
    pub fn new(lower: usize, upper: usize) -> Self {
        Self { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.upper - self.lower + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, j: usize) -> bool {
        (self.lower..=self.upper).contains(&j)
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.lower..=self.upper
    }
}

/// `log p(Y | Z, L_j, ν)` for every `j` in the window, all over the same
/// `rows`. Evaluated in parallel and returned in index order.
pub fn tau_log_likelihoods(
    builder: &LibraryBuilder,
    active: &[usize],
    nu: f64,
    window: Window,
    rows: RowRange,
    hyper: &Hyperparameters,
) -> Result<Vec<f64>> {
    let r = active.len();
    let target = builder.target(rows);
    let yty: f64 = target.iter().map(|v| v * v).sum();
    window
        .indices()
        .into_par_iter()
        .map(|j| {
            if r == 0 {
                return Ok(log_marginal(yty, rows.len(), None, nu, hyper));
            }
            let cols: Vec<_> = active.iter().map(|&k| builder.column(k, j, rows)).collect();
            let mut gram = DMatrix::zeros(r, r);
            for a in 0..r {
                for b in 0..=a {
                    let v: f64 = cols[a].iter().zip(cols[b].iter()).map(|(p, q)| p * q).sum();
                    gram[(a, b)] = v;
                    gram[(b, a)] = v;
                }
            }
            let lty = DVector::from_fn(r, |i, _| cols[i].iter().zip(target.iter()).map(|(a, b)| a * b).sum());
            let params = GaussianPosteriorParams::new(&gram, &lty, nu)?;
            Ok(log_marginal(yty, rows.len(), Some(&params), nu, hyper))
        })
        .collect()
}

/// Normalized `ζ_j ∝ exp(ℓ_j) g_j` via log-sum-exp.
pub fn tau_probabilities(log_likelihoods: &[f64], g: &[f64]) -> Vec<f64> {
    let l: Vec<f64> = log_likelihoods.iter().zip(g).map(|(ll, gj)| ll + gj.ln()).collect();
    let lse = log_sum_exp(&l);
    l.iter().map(|v| (v - lse).exp()).collect()
}

/// Outcome of one delay step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauUpdate {
    pub tau: usize,
    pub window: Window,
    pub zeta_max: f64,
    /// The posterior over the window is a point mass to working precision.
    pub absorbed: bool,
}

impl TauUpdate {
    pub fn collapsed(&self) -> bool {
        self.window.lower == self.window.upper
    }
}

/// Draws `τ ~ Multinomial(ζ)` and shrinks the window to the indices whose
/// probability exceeds `threshold`.
pub fn sample_tau<R: Rng + ?Sized>(zeta: &[f64], window: Window, threshold: f64, rng: &mut R) -> TauUpdate {
    debug_assert_eq!(zeta.len(), window.len());
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = zeta.len() - 1;
    for (i, z) in zeta.iter().enumerate() {
        acc += z;
        if u < acc {
            pick = i;
            break;
        }
    }
    // never land on a zero-probability tail index through round-off
    while zeta[pick] == 0.0 && pick > 0 {
        pick -= 1;
    }
    let first = zeta.iter().position(|&z| z > threshold).unwrap_or(pick).min(pick);
    let last = zeta.iter().rposition(|&z| z > threshold).unwrap_or(pick).max(pick);
    let (argmax, zeta_max) = zeta
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, z)| if z > best.1 { (i, z) } else { best });
    let others: f64 = zeta.iter().enumerate().filter(|(i, _)| *i != argmax).map(|(_, z)| z).sum();
    TauUpdate {
        tau: window.lower + pick,
        window: Window::new(window.lower + first, window.lower + last),
        zeta_max,
        absorbed: others <= f64::EPSILON / 2.0,
    }
}
