//! Reduction of sampler chains to inclusion probabilities, coefficient
//! summaries and a simulatable model.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::basis::CandidateCatalog;
use crate::error::{Error, Result};
use crate::gibbs::ChainRecord;
use crate::model::{ModelTerm, SparseDelayModel};

pub const DEFAULT_PIP_THRESHOLD: f64 = 0.5;

/// Summary of one equation's chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub channel: usize,
    pub names: Vec<String>,
    pub pip: Vec<f64>,
    /// Mean of each weight over the iterates that include it (0 if never).
    pub weight_mean: Vec<f64>,
    /// Standard deviation of each weight over the iterates that include it.
    pub weight_sd: Vec<f64>,
    pub tau_index: usize,
    pub tau_seconds: f64,
    pub retained_terms: Vec<usize>,
    pub n_post: usize,
    pub pip_threshold: f64,
}

impl PosteriorSummary {
    /// No candidate passed the inclusion threshold.
    pub fn is_empty(&self) -> bool {
        self.retained_terms.is_empty()
    }
}

pub fn summarize(chain: &ChainRecord, pip_threshold: f64, dt: f64) -> Result<PosteriorSummary> {
    let post = chain.retained();
    if post.is_empty() {
        return Err(Error::Config("chain has no post-burn-in iterations".into()));
    }
    let k = chain.names.len();
    let n_post = post.len();
    let mut pip = vec![0.0; k];
    let mut weight_mean = vec![0.0; k];
    let mut weight_sd = vec![0.0; k];
    for i in 0..k {
        let included: Vec<f64> = post.iter().filter(|r| r.z[i]).map(|r| r.theta[i]).collect();
        let c = included.len();
        pip[i] = c as f64 / n_post as f64;
        if c > 0 {
            let mean = included.iter().sum::<f64>() / c as f64;
            weight_mean[i] = mean;
            if c > 1 {
                let var = included.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (c - 1) as f64;
                weight_sd[i] = var.sqrt();
            }
        }
    }
    let retained_terms: Vec<usize> = (0..k).filter(|&i| pip[i] > pip_threshold).collect();
    let tau_index = post.last().expect("non-empty").tau;
    if retained_terms.is_empty() {
        warn!("equation {}: no candidate has PIP above {pip_threshold}", chain.channel + 1);
    }
    Ok(PosteriorSummary {
        channel: chain.channel,
        names: chain.names.clone(),
        pip,
        weight_mean,
        weight_sd,
        tau_index,
        tau_seconds: tau_index as f64 * dt,
        retained_terms,
        n_post,
        pip_threshold,
    })
}

/// Builds the discovered model from one summary per equation, in state
/// order. The delay is the average of the per-equation delays.
pub fn to_model(summaries: &[PosteriorSummary], catalog: &CandidateCatalog) -> Result<SparseDelayModel> {
    if summaries.is_empty() {
        return Err(Error::InvalidModel("no equations to assemble".into()));
    }
    let delay = if summaries.len() == 1 {
        summaries[0].tau_seconds
    } else {
        summaries.iter().map(|s| s.tau_seconds).sum::<f64>() / summaries.len() as f64
    };
    let equations = summaries
        .iter()
        .map(|s| {
            s.retained_terms
                .iter()
                .map(|&k| ModelTerm {
                    term: catalog.terms()[k],
                    coefficient: s.weight_mean[k],
                    coefficient_sd: s.weight_sd[k],
                })
                .collect()
        })
        .collect();
    SparseDelayModel::new(equations, delay)
}

/// Mean squared coefficient difference over the union of true and
/// identified terms; a term absent from one model counts with coefficient 0.
pub fn parameter_error(model: &SparseDelayModel, truth: &SparseDelayModel) -> f64 {
    let mut union: BTreeMap<(usize, String), (f64, f64)> = BTreeMap::new();
    for (eq, terms) in model.equations.iter().enumerate() {
        for t in terms {
            union.entry((eq, t.term.to_string())).or_default().0 += t.coefficient;
        }
    }
    for (eq, terms) in truth.equations.iter().enumerate() {
        for t in terms {
            union.entry((eq, t.term.to_string())).or_default().1 += t.coefficient;
        }
    }
    if union.is_empty() {
        return 0.0;
    }
    union.values().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / union.len() as f64
}

/// Machine-readable discovery result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub model: SparseDelayModel,
    pub rendered: String,
    pub dt: f64,
    /// Delay of each equation before averaging, in seconds.
    pub equation_delays: Vec<f64>,
    pub equations: Vec<PosteriorSummary>,
    /// Candidates removed before sampling because of correlation.
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl DiscoveryReport {
    pub fn new(summaries: Vec<PosteriorSummary>, catalog: &CandidateCatalog, dt: f64) -> Result<Self> {
        let model = to_model(&summaries, catalog)?;
        Ok(Self {
            rendered: model.render(),
            dt,
            equation_delays: summaries.iter().map(|s| s.tau_seconds).collect(),
            equations: summaries,
            model,
            dropped: Vec::new(),
        })
    }

    /// PIP table with inclusion-conditional weight summaries.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for eq in &self.equations {
            s.push_str(&format!(
                "equation {} (tau index {}, {} posterior samples)\n",
                eq.channel + 1,
                eq.tau_index,
                eq.n_post
            ));
            s.push_str(&format!("  {:<20} {:>6} {:>14} {:>12}\n", "term", "pip", "mean|incl", "sd|incl"));
            for k in 0..eq.names.len() {
                let mark = if eq.retained_terms.contains(&k) { '*' } else { ' ' };
                s.push_str(&format!(
                    "{mark} {:<20} {:>6.3} {:>14.6} {:>12.6}\n",
                    eq.names[k], eq.pip[k], eq.weight_mean[k], eq.weight_sd[k]
                ));
            }
        }
        s.push_str(&self.rendered);
        s.push('\n');
        s
    }
}
