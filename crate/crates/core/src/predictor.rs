//! Re-simulation of discovered models: point predictions, posterior bands
//! and delay-embedded phase portraits.

use std::io::Write;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::CandidateCatalog;
use crate::dde::simulate;
use crate::error::{Error, Result};
use crate::gibbs::ChainRecord;
use crate::model::{ModelTerm, SparseDelayModel};
use crate::trajectory::TrajectoryData;

pub const DEFAULT_N_DRAWS: usize = 200;

/// Simulates the mean-coefficient model from a constant history.
pub fn predict(model: &SparseDelayModel, history: &[f64], t_end: f64, dt: f64) -> Result<TrajectoryData> {
    simulate(model, history, t_end, dt)
}

/// Pointwise mean and 95% band of trajectories simulated from posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBand {
    pub dt: f64,
    /// Per state: mean, 2.5th and 97.5th percentile at each step.
    pub mean: Vec<Vec<f64>>,
    pub lo95: Vec<Vec<f64>>,
    pub hi95: Vec<Vec<f64>>,
    pub draws: usize,
    /// Draws whose simulation diverged and were left out.
    pub diverged: usize,
}

impl PredictionBand {
    pub fn len(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self, channel: usize, i: usize) -> f64 {
        self.hi95[channel][i] - self.lo95[channel][i]
    }

    /// CSV with columns `t, mean, lo95, hi95[, truth]` (suffixed `_x<j>`
    /// when there is more than one state).
    pub fn write_csv<W: Write>(&self, w: W, truth: Option<&TrajectoryData>) -> csv::Result<()> {
        let m = self.mean.len();
        let suffix = |j: usize| if m == 1 { String::new() } else { format!("_x{}", j + 1) };
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for j in 0..m {
            header.extend(["mean", "lo95", "hi95"].iter().map(|c| format!("{c}{}", suffix(j))));
            if truth.is_some() {
                header.push(format!("truth{}", suffix(j)));
            }
        }
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![(i as f64 * self.dt).to_string()];
            for j in 0..m {
                row.push(self.mean[j][i].to_string());
                row.push(self.lo95[j][i].to_string());
                row.push(self.hi95[j][i].to_string());
                if let Some(t) = truth {
                    row.push(t.channel(j).get(i).map_or(String::new(), f64::to_string));
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Linear-interpolation percentile of sorted values, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Model given by retained iterate `index` of every chain.
fn draw_model(chains: &[ChainRecord], catalog: &CandidateCatalog, picks: &[usize], dt: f64) -> Result<SparseDelayModel> {
    let mut delay = 0.0;
    let equations = chains
        .iter()
        .zip(picks)
        .map(|(chain, &i)| {
            let it = &chain.retained()[i];
            delay += it.tau as f64 * dt;
            (0..it.z.len())
                .filter(|&k| it.z[k])
                .map(|k| ModelTerm::new(catalog.terms()[k], it.theta[k]))
                .collect()
        })
        .collect();
    SparseDelayModel::new(equations, delay / chains.len() as f64)
}

/// Simulates `n_draws` models built from post-burn-in iterates chosen
/// uniformly at random (one chain per equation) and reduces them to a
/// pointwise band. Diverging draws are counted and excluded.
pub fn predict_with_uncertainty(
    chains: &[ChainRecord],
    catalog: &CandidateCatalog,
    history: &[f64],
    t_end: f64,
    dt: f64,
    n_draws: usize,
    seed: u64,
) -> Result<PredictionBand> {
    if chains.is_empty() || n_draws == 0 {
        return Err(Error::Config("need at least one chain and one draw".into()));
    }
    if chains.iter().any(|c| c.retained().is_empty()) {
        return Err(Error::Config("chain has no post-burn-in iterations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Vec<usize>> = (0..n_draws)
        .map(|_| chains.iter().map(|c| rng.random_range(0..c.retained().len())).collect())
        .collect();
    let results: Vec<Result<TrajectoryData>> = picks
        .par_iter()
        .map(|p| draw_model(chains, catalog, p, dt).and_then(|model| simulate(&model, history, t_end, dt)))
        .collect();
    let mut runs = Vec::with_capacity(n_draws);
    let mut diverged = 0;
    for r in results {
        match r {
            Ok(traj) => runs.push(traj),
            Err(Error::Diverged { .. } | Error::SingularOperand { .. }) => diverged += 1,
            Err(e) => return Err(e),
        }
    }
    if runs.is_empty() {
        return Err(Error::AllDrawsDiverged { draws: n_draws });
    }
    if diverged > 0 {
        warn!("{diverged} of {n_draws} posterior draws diverged and were excluded");
    }
    Ok(band_from_runs(&runs, dt, n_draws, diverged))
}

/// Reduces equally long trajectories to mean and percentile band.
pub fn band_from_runs(runs: &[TrajectoryData], dt: f64, draws: usize, diverged: usize) -> PredictionBand {
    let m = runs[0].m();
    let n = runs[0].len();
    let mut band = PredictionBand {
        dt,
        mean: vec![vec![0.0; n]; m],
        lo95: vec![vec![0.0; n]; m],
        hi95: vec![vec![0.0; n]; m],
        draws,
        diverged,
    };
    let mut column = vec![0.0; runs.len()];
    for j in 0..m {
        for i in 0..n {
            for (c, r) in column.iter_mut().zip(runs) {
                *c = r.channel(j)[i];
            }
            band.mean[j][i] = column.iter().sum::<f64>() / runs.len() as f64;
            column.sort_by(f64::total_cmp);
            band.lo95[j][i] = percentile(&column, 0.025);
            band.hi95[j][i] = percentile(&column, 0.975);
        }
    }
    band
}

/// Delay embedding `(x(t), x(t - delay))` of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub x: Vec<f64>,
    pub x_delayed: Vec<f64>,
}

impl PhasePortrait {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(min_x, max_x, min_delayed, max_delayed)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let ext = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
        };
        let (a, b) = ext(&self.x);
        let (c, d) = ext(&self.x_delayed);
        (a, b, c, d)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "x_delayed"])?;
        for (a, b) in self.x.iter().zip(&self.x_delayed) {
            out.write_record([a.to_string(), b.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Pairs each sample at or after `t0 + delay` with the state `delay`
/// seconds earlier; off-grid delays are linearly interpolated.
pub fn phase_portrait(trajectory: &TrajectoryData, channel: usize, delay: f64) -> Result<PhasePortrait> {
    if channel >= trajectory.m() {
        return Err(Error::Config(format!("state {} does not exist", channel + 1)));
    }
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(Error::Config(format!("delay {delay} must be >= 0")));
    }
    let x = trajectory.channel(channel);
    let lag = delay / trajectory.dt;
    let whole = lag.round();
    let (k, frac) = if (lag - whole).abs() < 1e-9 {
        (whole as usize, 0.0)
    } else {
        (lag.floor() as usize, lag - lag.floor())
    };
    let start = if frac == 0.0 { k } else { k + 1 };
    if start >= x.len() {
        return Ok(PhasePortrait {
            x: Vec::new(),
            x_delayed: Vec::new(),
        });
    }
    let delayed = (start..x.len())
        .map(|i| {
            if frac == 0.0 {
                x[i - k]
            } else {
                // t - delay lies between samples i - k - 1 and i - k
                x[i - k] * (1.0 - frac) + x[i - k - 1] * frac
            }
        })
        .collect();
    Ok(PhasePortrait {
        x: x[start..].to_vec(),
        x_delayed: delayed,
    })
}
