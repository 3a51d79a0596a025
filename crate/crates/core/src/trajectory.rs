use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SparseDelayModel;

/// A uniformly sampled multivariate time series, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    pub dt: f64,
    pub t0: f64,
    states: Vec<Vec<f64>>,
    derivatives: Option<Vec<Vec<f64>>>,
}

impl TrajectoryData {
    /// Builds a trajectory from per-channel sample vectors.
    pub fn from_channels(dt: f64, t0: f64, states: Vec<Vec<f64>>) -> Result<Self> {
        let data = Self {
            dt,
            t0,
            states,
            derivatives: None,
        };
        data.validate()?;
        Ok(data)
    }

    /// Builds a trajectory from rows of `m` values each.
    pub fn from_rows(dt: f64, t0: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let mut states = vec![Vec::with_capacity(rows.len()); m];
        for row in rows {
            if row.len() != m {
                return Err(Error::InvalidData("ragged rows".into()));
            }
            for (c, v) in states.iter_mut().zip(row) {
                c.push(*v);
            }
        }
        Self::from_channels(dt, t0, states)
    }

    pub fn with_derivatives(mut self, derivatives: Vec<Vec<f64>>) -> Result<Self> {
        self.derivatives = Some(derivatives);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidData(format!("dt = {} must be positive", self.dt)));
        }
        if self.states.is_empty() {
            return Err(Error::InvalidData("no state channels".into()));
        }
        let n = self.states[0].len();
        if n < 2 {
            return Err(Error::TooShort { len: n, min: 2 });
        }
        let check = |channels: &[Vec<f64>], what: &str| -> Result<()> {
            for (j, c) in channels.iter().enumerate() {
                if c.len() != n {
                    return Err(Error::InvalidData(format!("{what} channel {} has {} samples, expected {n}", j + 1, c.len())));
                }
                if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidData(format!("{what} channel {} is not finite at row {i}", j + 1)));
                }
            }
            Ok(())
        };
        check(&self.states, "state")?;
        if let Some(d) = &self.derivatives {
            if d.len() != self.states.len() {
                return Err(Error::InvalidData("derivative and state shapes differ".into()));
            }
            check(d, "derivative")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        &self.states[j]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|c| c[i]).collect()
    }

    pub fn derivatives(&self) -> Option<&[Vec<f64>]> {
        self.derivatives.as_deref()
    }

    pub fn derivative_channel(&self, j: usize) -> Result<&[f64]> {
        self.derivatives
            .as_ref()
            .map(|d| d[j].as_slice())
            .ok_or(Error::MissingDerivatives)
    }

    /// Replaces the states, keeping timing metadata and dropping derivatives.
    pub fn map_channels(&self, states: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_channels(self.dt, self.t0, states)
    }

    /// Keeps the first `n` samples.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let states = self.states.iter().map(|c| c[..n.min(c.len())].to_vec()).collect();
        let mut out = Self::from_channels(self.dt, self.t0, states)?;
        if let Some(d) = &self.derivatives {
            out = out.with_derivatives(d.iter().map(|c| c[..n.min(c.len())].to_vec()).collect())?;
        }
        Ok(out)
    }

    /// Writes `t, x1..xm[, dx1..dxm]` with round-trip float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let m = self.m();
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|j| format!("x{j}")));
        if self.derivatives.is_some() {
            header.extend((1..=m).map(|j| format!("dx{j}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            write!(w, "{}", self.time(i))?;
            for c in &self.states {
                write!(w, ",{}", c[i])?;
            }
            if let Some(d) = &self.derivatives {
                for c in d {
                    write!(w, ",{}", c[i])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). When `dt` is
    /// `None` it is inferred from the first and last time stamps.
    pub fn read_csv(path: &Path, dt: Option<f64>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("t") {
            return Err(Error::InvalidData(format!("{}: first column must be `t`", path.display())));
        }
        let state_cols: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with('x'))
            .map(|(i, _)| i)
            .collect();
        let deriv_cols: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with("dx"))
            .map(|(i, _)| i)
            .collect();
        let m = state_cols.len();
        let mut times = Vec::new();
        let mut states = vec![Vec::new(); m];
        let mut derivs = vec![Vec::new(); deriv_cols.len()];
        for record in reader.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidData(format!("{}: bad value in column {}", path.display(), i + 1)))
            };
            times.push(parse(0)?);
            for (c, &i) in states.iter_mut().zip(&state_cols) {
                c.push(parse(i)?);
            }
            for (c, &i) in derivs.iter_mut().zip(&deriv_cols) {
                c.push(parse(i)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::TooShort { len: times.len(), min: 2 });
        }
        let dt = dt.unwrap_or_else(|| (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64);
        let data = Self::from_channels(dt, times[0], states)?;
        if deriv_cols.is_empty() {
            Ok(data)
        } else {
            data.with_derivatives(derivs)
        }
    }
}

/// Noise metadata recorded alongside generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub fraction: f64,
    pub seed: u64,
}

/// JSON companion of a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub dt: f64,
    pub t0: f64,
    pub samples: usize,
    pub states: usize,
    pub noise: Option<NoiseRecord>,
    pub truth: Option<SparseDelayModel>,
    pub history: Option<Vec<f64>>,
}

impl TrajectoryManifest {
    pub fn describe(data: &TrajectoryData) -> Self {
        Self {
            dt: data.dt,
            t0: data.t0,
            samples: data.len(),
            states: data.m(),
            noise: None,
            truth: None,
            history: None,
        }
    }
}
