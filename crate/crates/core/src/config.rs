//! Declarative run configuration (TOML), with every default resolved so
//! the effective configuration can be echoed into output manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::DEFAULT_CORRELATION_THRESHOLD;
use crate::error::{Error, Result};
use crate::gibbs::chain::{DEFAULT_BOUNDARY_TRIM, DEFAULT_MIN_WINDOW_START, DEFAULT_N_MC};
use crate::gibbs::tau::DEFAULT_SHRINK_THRESHOLD;
use crate::gibbs::{Hyperparameters, SamplerConfig, SearchWindow};
use crate::model::{ModelTerm, SparseDelayModel};
use crate::posterior::DEFAULT_PIP_THRESHOLD;
use crate::predictor::DEFAULT_N_DRAWS;
use crate::signal::FilterSpec;
use crate::term::parse_term;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discover: Option<DiscoverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportConfig>,
}

/// One right-hand side as parallel term and coefficient lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSpec {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub equations: Vec<EquationSpec>,
    pub delay: f64,
    pub history: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub noise: f64,
}

impl SimulateConfig {
    pub fn model(&self) -> Result<SparseDelayModel> {
        let equations = self
            .equations
            .iter()
            .enumerate()
            .map(|(i, eq)| {
                if eq.terms.len() != eq.coefficients.len() {
                    return Err(Error::Config(format!(
                        "simulate.equations[{i}]: {} terms but {} coefficients",
                        eq.terms.len(),
                        eq.coefficients.len()
                    )));
                }
                eq.terms
                    .iter()
                    .zip(&eq.coefficients)
                    .map(|(t, &c)| Ok(ModelTerm::new(parse_term(t)?, c)))
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        SparseDelayModel::new(equations, self.delay)
    }
}

fn default_n_mc() -> usize {
    DEFAULT_N_MC
}
fn default_pip() -> f64 {
    DEFAULT_PIP_THRESHOLD
}
fn default_corr() -> f64 {
    DEFAULT_CORRELATION_THRESHOLD
}
fn default_true() -> bool {
    true
}
fn default_shrink() -> f64 {
    DEFAULT_SHRINK_THRESHOLD
}
fn default_min_start() -> usize {
    DEFAULT_MIN_WINDOW_START
}
fn default_trim() -> usize {
    DEFAULT_BOUNDARY_TRIM
}
fn default_stride() -> usize {
    1
}

fn default_draws() -> usize {
    DEFAULT_N_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverConfig {
    /// Trajectory CSV (`t, x1.., [dx1..]`).
    pub data: PathBuf,
    /// Sampling interval; inferred from the time column when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub catalog: Vec<String>,
    pub window: SearchWindow,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    /// Smooth the states before differentiating.
    #[serde(default = "default_true")]
    pub smooth: bool,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default = "default_pip")]
    pub pip_threshold: f64,
    #[serde(default = "default_corr")]
    pub correlation_threshold: f64,
    /// Candidates removed before the correlation gate.
    #[serde(default)]
    pub drop: Vec<String>,
    /// Resolve correlated pairs by dropping the later candidate of each.
    #[serde(default)]
    pub auto_drop: bool,
    #[serde(default = "default_shrink")]
    pub shrink_threshold: f64,
    #[serde(default = "default_min_start")]
    pub min_window_start: usize,
    #[serde(default = "default_trim")]
    pub boundary_trim: usize,
    #[serde(default = "default_stride")]
    pub row_stride: usize,
    #[serde(default)]
    pub trace: bool,
}

impl DiscoverConfig {
    pub fn new(data: impl Into<PathBuf>, catalog: Vec<String>, start: usize, end: usize) -> Self {
        Self {
            data: data.into(),
            dt: None,
            catalog,
            window: SearchWindow { start, end },
            n_mc: DEFAULT_N_MC,
            hyperparameters: Hyperparameters::default(),
            smooth: true,
            filter: FilterSpec::default(),
            pip_threshold: DEFAULT_PIP_THRESHOLD,
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
            drop: Vec::new(),
            auto_drop: false,
            shrink_threshold: DEFAULT_SHRINK_THRESHOLD,
            min_window_start: DEFAULT_MIN_WINDOW_START,
            boundary_trim: DEFAULT_BOUNDARY_TRIM,
            row_stride: 1,
            trace: false,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            n_mc: self.n_mc,
            window: self.window,
            hyperparameters: self.hyperparameters,
            shrink_threshold: self.shrink_threshold,
            min_window_start: self.min_window_start,
            boundary_trim: self.boundary_trim,
            row_stride: self.row_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler().validate()?;
        if !(self.pip_threshold >= 0.0 && self.pip_threshold < 1.0) {
            return Err(Error::Config(format!("discover.pip_threshold {} outside [0, 1)", self.pip_threshold)));
        }
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "discover.correlation_threshold {} outside (0, 1]",
                self.correlation_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Discovery report JSON holding the mean-coefficient model.
    pub report: PathBuf,
    /// Chain JSON from a traced discovery run; enables the posterior band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<PathBuf>,
    pub history: Vec<f64>,
    pub t_end: f64,
    /// Output step; the report's sampling interval when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    /// Ground-truth model (JSON, or a data manifest carrying `truth`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub phase_portrait: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub runs: Vec<ReportRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRun {
    pub label: String,
    /// Discovery report JSON.
    pub report: PathBuf,
    /// Ground-truth model JSON or data manifest.
    pub truth: PathBuf,
}

/// What a manifest records: the command, the effective config and the
/// files written. Loading a manifest as a config re-runs the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub effective_config: RunConfig,
    pub outputs: Vec<String>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config, or the `effective_config` of a JSON manifest.
    /// Relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = if path.extension().is_some_and(|e| e == "json") {
            let manifest: RunManifest =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            manifest.effective_config
        } else {
            Self::from_toml_str(&text).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
                other => other,
            })?
        };
        // absolute, so that a manifest written elsewhere still points at the inputs
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(parent).map_err(|e| Error::io(parent, e))?;
        config.resolve_paths(&base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.discover {
            fix(&mut d.data);
        }
        if let Some(p) = &mut self.predict {
            fix(&mut p.report);
            p.chains.as_mut().map(fix);
            p.truth.as_mut().map(fix);
        }
        if let Some(r) = &mut self.report {
            for run in &mut r.runs {
                fix(&mut run.report);
                fix(&mut run.truth);
            }
        }
    }
}
