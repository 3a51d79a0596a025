//! Initialization and the three-phase chain schedule.

use log::{debug, info, warn};
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conditionals::{
    active_indices, posterior_params, sample_dirichlet, sample_nu, sample_p0, sample_sigma2, sample_theta, sample_z,
};
use super::hyper::Hyperparameters;
use super::linalg::{residual_quadratic, RegressionStats};
use super::tau::{sample_tau, tau_log_likelihoods, tau_probabilities, Window, DEFAULT_SHRINK_THRESHOLD};
use crate::basis::{LibraryBuilder, LibraryCache, RowRange};
use crate::error::{Error, Result};

pub const DEFAULT_N_MC: usize = 2000;
pub const DEFAULT_MIN_WINDOW_START: usize = 5;
pub const DEFAULT_BOUNDARY_TRIM: usize = 2;

fn default_n_mc() -> usize {
    DEFAULT_N_MC
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

/// Initial delay-index search range, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchWindow {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    pub window: SearchWindow,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default = "default_shrink")]
    pub shrink_threshold: f64,
    #[serde(default = "default_min_start")]
    pub min_window_start: usize,
    /// Samples dropped at the end of the series, where the derivative
    /// stencils are one-sided.
    #[serde(default = "default_trim")]
    pub boundary_trim: usize,
    /// Use every `row_stride`-th row; smoothed derivatives are strongly
    /// correlated between neighbouring samples.
    #[serde(default = "default_stride")]
    pub row_stride: usize,
}

impl SamplerConfig {
    pub fn new(start: usize, end: usize) -> Self {
        Self {
            n_mc: DEFAULT_N_MC,
            window: SearchWindow { start, end },
            hyperparameters: Hyperparameters::default(),
            shrink_threshold: DEFAULT_SHRINK_THRESHOLD,
            min_window_start: DEFAULT_MIN_WINDOW_START,
            boundary_trim: DEFAULT_BOUNDARY_TRIM,
            row_stride: 1,
        }
    }

    pub fn with_n_mc(mut self, n_mc: usize) -> Self {
        self.n_mc = n_mc;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparameters.validate()?;
        if self.n_mc < 4 {
            return Err(Error::Config(format!("n_mc must be at least 4, got {}", self.n_mc)));
        }
        if !(self.shrink_threshold >= 0.0 && self.shrink_threshold < 1.0) {
            return Err(Error::Config(format!("shrink_threshold must lie in [0, 1), got {}", self.shrink_threshold)));
        }
        let SearchWindow { start, end } = self.window;
        if end < start || end - start < 2 {
            return Err(Error::WindowTooSmall { start, end });
        }
        if self.row_stride == 0 {
            return Err(Error::Config("row_stride must be at least 1".into()));
        }
        if start < self.min_window_start.max(1) {
            return Err(Error::WindowTouchesZero {
                start,
                min: self.min_window_start.max(1),
            });
        }
        Ok(())
    }

    pub fn burn_in_end(&self) -> usize {
        self.n_mc / 4
    }

    pub fn averaging_end(&self) -> usize {
        self.n_mc / 2
    }
}

/// One Gibbs iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub tau: usize,
    pub z: Vec<bool>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub nu: f64,
    pub p0: f64,
    /// Delay-index weights over `window`.
    pub g: Vec<f64>,
    pub window: Window,
    pub tau_fixed: bool,
    /// Columns that are identically zero and never enter the model.
    pub clamped: Vec<bool>,
    /// Times each index of the initial window has been drawn.
    counts: Vec<f64>,
    origin: usize,
}

impl SamplerState {
    fn concentration(&self, hyper: &Hyperparameters) -> Vec<f64> {
        self.window
            .indices()
            .map(|j| hyper.dirichlet_alpha + self.counts[j - self.origin])
            .collect()
    }
}

/// Rows shared by every delay index: all samples except `boundary_trim` at
/// each end, where the derivative stencils are one-sided.
pub fn regression_rows(samples: usize, config: &SamplerConfig) -> RowRange {
    RowRange::new(config.boundary_trim.min(samples), samples.saturating_sub(config.boundary_trim))
        .with_step(config.row_stride)
}

/// Draws `τ⁽⁰⁾` uniformly in the window and seeds `Z`, `θ` and `σ²` from an
/// ordinary least-squares fit of the full library.
pub fn init<R: Rng + ?Sized>(builder: &LibraryBuilder, config: &SamplerConfig, rng: &mut R) -> Result<SamplerState> {
    config.validate()?;
    let window = Window::new(config.window.start, config.window.end);
    let rows = regression_rows(builder.samples(), config);
    let k = builder.catalog().len();
    if window.upper >= rows.end || rows.len() < k {
        return Err(Error::DelayTooLarge {
            tau_index: window.upper,
            rows: rows.len(),
            columns: k,
        });
    }
    let tau = rng.random_range(window.lower..=window.upper);
    let lib = builder.library(tau, rows)?;

    let clamped: Vec<bool> = lib
        .matrix
        .column_iter()
        .map(|c| c.iter().all(|&v| v == 0.0))
        .collect();
    for (name, _) in lib.names.iter().zip(&clamped).filter(|(_, &c)| c) {
        info!("candidate `{name}` is identically zero on the regression rows and is excluded");
    }

    let svd = lib.matrix.clone().svd(true, true);
    let w: DVector<f64> = svd
        .solve(&lib.target, 1e-12)
        .map_err(|e| Error::InvalidData(format!("least-squares initialization failed: {e}")))?;
    let resid = &lib.target - &lib.matrix * &w;
    let sigma2 = (resid.norm_squared() / lib.rows() as f64).max(f64::MIN_POSITIVE);
    let wmax = w.amax();
    let z: Vec<bool> = (0..k)
        .map(|i| !clamped[i] && wmax > 0.0 && w[i].abs() >= 0.01 * wmax)
        .collect();
    let theta: Vec<f64> = (0..k).map(|i| if z[i] { w[i] } else { 0.0 }).collect();
    let hyper = &config.hyperparameters;
    let r = z.iter().filter(|&&zi| zi).count() as f64;
    let ss: f64 = theta.iter().map(|t| t * t).sum();
    // mode of the slab-variance conditional at the least-squares fit
    let nu = ((hyper.beta_nu + ss / (2.0 * sigma2)) / (hyper.alpha_nu + r / 2.0 + 1.0)).clamp(1e-8, 1e12);
    debug!("init tau={tau} active={:?} sigma2={sigma2:.3e} nu={nu:.3e}", active_indices(&z));

    Ok(SamplerState {
        tau,
        z,
        theta,
        sigma2,
        nu,
        p0: 0.1,
        g: vec![1.0 / window.len() as f64; window.len()],
        window,
        tau_fixed: false,
        clamped,
        counts: vec![0.0; window.len()],
        origin: window.lower,
    })
}

/// Stored snapshot of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub tau: usize,
    pub z: Vec<bool>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub nu: f64,
    pub p0: f64,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    /// Candidate names in catalog order.
    pub names: Vec<String>,
    /// Derivative channel the chain explains.
    pub channel: usize,
    pub iterations: Vec<IterationRecord>,
    pub burn_in_end: usize,
    pub averaging_end: usize,
    /// First iteration with a frozen delay index.
    pub tau_fix_iteration: Option<usize>,
    /// Iteration at which the delay posterior collapsed on its own.
    pub converged_at: Option<usize>,
    pub cholesky_retries: usize,
    pub clamped: Vec<usize>,
}

impl ChainRecord {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Iterates used for posterior summaries (the final half).
    pub fn retained(&self) -> &[IterationRecord] {
        &self.iterations[self.averaging_end.min(self.iterations.len())..]
    }

    /// Trace in long CSV form: one row per iteration.
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![
            "iteration".to_string(),
            "tau".into(),
            "window_lower".into(),
            "window_upper".into(),
            "sigma2".into(),
            "nu".into(),
            "p0".into(),
        ];
        for name in &self.names {
            header.push(format!("z[{name}]"));
        }
        for name in &self.names {
            header.push(format!("theta[{name}]"));
        }
        out.write_record(&header)?;
        for (i, it) in self.iterations.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                it.tau.to_string(),
                it.window.lower.to_string(),
                it.window.upper.to_string(),
                it.sigma2.to_string(),
                it.nu.to_string(),
                it.p0.to_string(),
            ];
            row.extend(it.z.iter().map(|&b| u8::from(b).to_string()));
            row.extend(it.theta.iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn at(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Sampler {
        iteration,
        source: Box::new(e),
    }
}

/// Runs `config.n_mc` iterations: delay, library, indicators, noise
/// variance, weights, slab variance, inclusion rate, delay weights.
/// Burn-in covers the first quarter; the delay index is frozen at the
/// rounded mean of the second quarter for the final half.
pub fn run_chain<R: Rng + ?Sized>(
    builder: &LibraryBuilder,
    channel: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<ChainRecord> {
    let mut state = init(builder, config, rng)?;
    let hyper = &config.hyperparameters;
    let rows = regression_rows(builder.samples(), config);
    let burn_in_end = config.burn_in_end();
    let averaging_end = config.averaging_end();
    let cache = LibraryCache::default();
    let mut record = ChainRecord {
        names: builder.catalog().names().to_vec(),
        channel,
        iterations: Vec::with_capacity(config.n_mc),
        burn_in_end,
        averaging_end,
        tau_fix_iteration: None,
        converged_at: None,
        cholesky_retries: 0,
        clamped: (0..state.clamped.len()).filter(|&k| state.clamped[k]).collect(),
    };

    for it in 0..config.n_mc {
        let wrap = at(it);
        if it == averaging_end && !state.tau_fixed {
            let taus = &record.iterations[burn_in_end..averaging_end];
            let mean = taus.iter().map(|r| r.tau as f64).sum::<f64>() / taus.len() as f64;
            state.tau = mean.round_ties_even() as usize;
            state.tau_fixed = true;
            state.window = Window::new(state.tau, state.tau);
            record.tau_fix_iteration = Some(it);
            debug!("tau frozen at {} (mean {mean:.3})", state.tau);
        }

        if !state.tau_fixed {
            let ll = tau_log_likelihoods(builder, &active_indices(&state.z), state.nu, state.window, rows, hyper)
                .map_err(&wrap)?;
            let zeta = tau_probabilities(&ll, &state.g);
            let update = sample_tau(&zeta, state.window, config.shrink_threshold, rng);
            if update.window != state.window {
                debug!("iteration {it}: window {:?} -> {:?}", state.window, update.window);
            }
            state.tau = update.tau;
            state.window = update.window;
            if update.collapsed() || (update.absorbed && it < burn_in_end) {
                state.tau_fixed = true;
                state.window = Window::new(update.tau, update.tau);
                record.tau_fix_iteration = Some(it);
                record.converged_at = Some(it);
                debug!("iteration {it}: delay posterior converged at {}", update.tau);
            }
        }

        let lib = cache.get_or_build(builder, state.tau, rows).map_err(&wrap)?;
        let stats = RegressionStats::from_library(&lib);

        let previous = state.z.clone();
        match sample_z(&mut state.z, &stats, state.nu, state.p0, &state.clamped, hyper, rng) {
            Ok(()) => {}
            Err(Error::CholeskyFailure { rank }) => {
                warn!("iteration {it}: Cholesky failure at rank {rank}; keeping previous indicators");
                record.cholesky_retries += 1;
                state.z = previous;
            }
            Err(e) => return Err(wrap(e)),
        }

        let params = posterior_params(&stats, &state.z, state.nu).map_err(&wrap)?;
        let q = residual_quadratic(stats.yty, params.as_ref());
        debug_assert!(q >= -1e-8 * stats.yty);
        state.sigma2 = sample_sigma2(&stats, params.as_ref(), hyper, rng);
        state.theta = sample_theta(&state.z, params.as_ref(), state.sigma2, rng);
        state.nu = sample_nu(&state.z, &state.theta, state.sigma2, hyper, rng);
        state.p0 = sample_p0(&state.z, hyper, rng);

        if !state.tau_fixed {
            state.counts[state.tau - state.origin] += 1.0;
            state.g = sample_dirichlet(&state.concentration(hyper), rng).map_err(&wrap)?;
        }

        record.iterations.push(IterationRecord {
            tau: state.tau,
            z: state.z.clone(),
            theta: state.theta.clone(),
            sigma2: state.sigma2,
            nu: state.nu,
            p0: state.p0,
            window: state.window,
        });
    }
    Ok(record)
}
