//! Fixed-step integration of constant-delay systems by the method of steps.
//!
//! The step equals the output spacing. Delayed values come from the stored
//! grid (exact at grid points) and from cubic Hermite interpolation on
//! stored `(state, derivative)` pairs in between; before `t = 0` the
//! constant history is used.

use crate::error::{Error, Result};
use crate::model::SparseDelayModel;
use crate::trajectory::TrajectoryData;

pub const DEFAULT_OVERFLOW_BOUND: f64 = 1e12;

/// Lag offsets closer than this (in units of `dt`) to a grid point snap to it.
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    pub overflow_bound: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            overflow_bound: DEFAULT_OVERFLOW_BOUND,
        }
    }
}

/// Integrates `model` from a constant history over `[0, t_end]`.
pub fn simulate(model: &SparseDelayModel, history: &[f64], t_end: f64, dt: f64) -> Result<TrajectoryData> {
    simulate_with(model, history, t_end, dt, SimulationOptions::default())
}

pub fn simulate_with(
    model: &SparseDelayModel,
    history: &[f64],
    t_end: f64,
    dt: f64,
    options: SimulationOptions,
) -> Result<TrajectoryData> {
    model.validate()?;
    let m = model.m;
    if history.len() != m {
        return Err(Error::InvalidModel(format!("history has {} values for {m} states", history.len())));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidModel(format!("need dt > 0 and t_end > 0 (dt = {dt}, t_end = {t_end})")));
    }
    // lag in steps; a zero delay makes the delayed state the current stage
    let lag = model.delay / dt;
    if model.delay != 0.0 && lag < 1.0 - GRID_SNAP {
        return Err(Error::InvalidModel(format!(
            "delay {} is shorter than the step {dt}",
            model.delay
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let n = steps + 1;

    let mut grid = Grid {
        m,
        states: Vec::with_capacity(n * m),
        slopes: Vec::with_capacity(n * m),
        history,
        dt,
    };
    grid.states.extend_from_slice(history);

    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut stage = vec![0.0; m];
    let mut lagged = vec![0.0; m];

    for i in 0..steps {
        let x = grid.states[i * m..(i + 1) * m].to_vec();
        let h = dt;

        eval(model, &x, lag, i as f64, &grid, &mut lagged, &mut k1)?;
        grid.slopes.extend_from_slice(&k1);

        for j in 0..m {
            stage[j] = x[j] + 0.5 * h * k1[j];
        }
        eval(model, &stage, lag, i as f64 + 0.5, &grid, &mut lagged, &mut k2)?;
        for j in 0..m {
            stage[j] = x[j] + 0.5 * h * k2[j];
        }
        eval(model, &stage, lag, i as f64 + 0.5, &grid, &mut lagged, &mut k3)?;
        for j in 0..m {
            stage[j] = x[j] + h * k3[j];
        }
        eval(model, &stage, lag, i as f64 + 1.0, &grid, &mut lagged, &mut k4)?;

        let time = (i + 1) as f64 * dt;
        for j in 0..m {
            let next = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            if !next.is_finite() || next.abs() > options.overflow_bound {
                return Err(Error::Diverged { time });
            }
            grid.states.push(next);
        }
    }

    let mut channels = vec![Vec::with_capacity(n); m];
    for row in grid.states.chunks(m) {
        for (c, v) in channels.iter_mut().zip(row) {
            c.push(*v);
        }
    }
    TrajectoryData::from_channels(dt, 0.0, channels)
}

fn eval(
    model: &SparseDelayModel,
    x: &[f64],
    lag: f64,
    position: f64,
    grid: &Grid<'_>,
    lagged: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if lag == 0.0 {
        lagged.copy_from_slice(x);
    } else {
        grid.delayed(position - lag, lagged);
    }
    model.rhs_into(x, lagged, out)
}

struct Grid<'a> {
    m: usize,
    states: Vec<f64>,
    /// Right-hand side at each completed grid point.
    slopes: Vec<f64>,
    history: &'a [f64],
    dt: f64,
}

impl Grid<'_> {
    /// State at fractional grid position `p` (units of steps from `t = 0`).
    fn delayed(&self, p: f64, out: &mut [f64]) {
        let m = self.m;
        if p <= GRID_SNAP {
            if p >= -GRID_SNAP {
                out.copy_from_slice(&self.states[..m]);
            } else {
                out.copy_from_slice(self.history);
            }
            return;
        }
        let nearest = p.round();
        if (p - nearest).abs() <= GRID_SNAP {
            let k = nearest as usize;
            out.copy_from_slice(&self.states[k * m..(k + 1) * m]);
            return;
        }
        let k = p.floor() as usize;
        let s = p - k as f64;
        // cubic Hermite on [k, k+1]; slopes are per second, positions per step
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let y0 = &self.states[k * m..(k + 1) * m];
        let y1 = &self.states[(k + 1) * m..(k + 2) * m];
        let d0 = &self.slopes[k * m..(k + 1) * m];
        let d1 = &self.slopes[(k + 1) * m..(k + 2) * m];
        for j in 0..m {
            out[j] = h00 * y0[j] + h01 * y1[j] + self.dt * (h10 * d0[j] + h11 * d1[j]);
        }
    }
}
