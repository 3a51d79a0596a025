use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior hyperparameters. Defaults: Beta(0.1, 0.1) on the inclusion rate,
/// IG(1e-4, 1e-4) on the noise variance, IG(0.1, 0.1) on the slab variance
/// and a flat Dirichlet(1, ..., 1) over delay indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub alpha_p: f64,
    pub beta_p: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    pub alpha_nu: f64,
    pub beta_nu: f64,
    pub dirichlet_alpha: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            alpha_p: 0.1,
            beta_p: 0.1,
            alpha_sigma: 1e-4,
            beta_sigma: 1e-4,
            alpha_nu: 0.1,
            beta_nu: 0.1,
            dirichlet_alpha: 1.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha_p", self.alpha_p),
            ("beta_p", self.beta_p),
            ("alpha_sigma", self.alpha_sigma),
            ("beta_sigma", self.beta_sigma),
            ("alpha_nu", self.alpha_nu),
            ("beta_nu", self.beta_nu),
            ("dirichlet_alpha", self.dirichlet_alpha),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("hyperparameter {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}
