//! Noise injection, finite-difference derivatives and zero-phase smoothing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::TrajectoryData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise standard deviation as a fraction of each channel's sample std.
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default = "default_order")]
    pub order: usize,
    /// Fraction of the Nyquist frequency.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

fn default_order() -> usize {
    4
}

fn default_cutoff() -> f64 {
    0.1
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: default_order(),
            cutoff: default_cutoff(),
        }
    }
}

pub fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Adds i.i.d. Gaussian noise per channel. Channel `j` draws from its own
/// ChaCha stream `j` under `spec.seed`, so results do not depend on the
/// order channels are processed in.
pub fn add_noise(data: &TrajectoryData, spec: &NoiseSpec) -> Result<TrajectoryData> {
    if !(spec.fraction >= 0.0 && spec.fraction.is_finite()) {
        return Err(Error::Config(format!("noise fraction {} must be >= 0", spec.fraction)));
    }
    if spec.fraction == 0.0 {
        return Ok(data.clone());
    }
    let channels = data
        .channels()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let sd = spec.fraction * sample_std(c);
            if sd == 0.0 {
                return c.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(j as u64);
            let normal = Normal::new(0.0, sd).expect("finite positive sd");
            c.iter().map(|v| v + normal.sample(&mut rng)).collect()
        })
        .collect();
    data.map_channels(channels)
}

/// Five-point stencils, all fourth-order accurate and exact for polynomials
/// of degree <= 4. Rows are the weights over `f[0..5]` of the window, scaled
/// by `1 / (12 h)`:
///
/// ```text
/// left edge   i = 0:  -25  48 -36  16  -3
///             i = 1:   -3 -10  18  -6   1
/// interior:             1  -8   0   8  -1   (centred on the middle point)
/// right edge  i = n-2: -1   6 -18  10   3
///             i = n-1:  3 -16  36 -48  25
/// ```
const FIRST: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const SECOND: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const PENULTIMATE: [f64; 5] = [-1.0, 6.0, -18.0, 10.0, 3.0];
const LAST: [f64; 5] = [3.0, -16.0, 36.0, -48.0, 25.0];

pub const MIN_DIFFERENTIATE_LEN: usize = 7;

pub fn finite_difference(x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < MIN_DIFFERENTIATE_LEN {
        return Err(Error::TooShort {
            len: n,
            min: MIN_DIFFERENTIATE_LEN,
        });
    }
    let scale = 1.0 / (12.0 * dt);
    let apply = |w: &[f64; 5], window: &[f64]| -> f64 {
        w.iter().zip(window).map(|(a, b)| a * b).sum::<f64>() * scale
    };
    let mut out = Vec::with_capacity(n);
    out.push(apply(&FIRST, &x[0..5]));
    out.push(apply(&SECOND, &x[0..5]));
    for i in 2..n - 2 {
        out.push(apply(&CENTRAL, &x[i - 2..i + 3]));
    }
    out.push(apply(&PENULTIMATE, &x[n - 5..n]));
    out.push(apply(&LAST, &x[n - 5..n]));
    Ok(out)
}

/// Fills the derivative channels by finite differences of the states.
pub fn differentiate(data: &TrajectoryData) -> Result<TrajectoryData> {
    let derivs = data
        .channels()
        .iter()
        .map(|c| finite_difference(c, data.dt))
        .collect::<Result<Vec<_>>>()?;
    data.map_channels(data.channels().to_vec())?.with_derivatives(derivs)
}

/// One second-order (or first-order, with `b2 = a2 = 0`) section with
/// `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Section {
    fn steady_state(&self, level: f64) -> [f64; 2] {
        // transposed direct form II with constant input and output `level`
        let z2 = (self.b[2] - self.a[2]) * level;
        let z1 = (self.b[1] - self.a[1]) * level + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[1] * y + z[1];
            z[1] = self.b[2] * input - self.a[2] * y;
            *v = y;
        }
    }

    fn response(&self, omega: f64) -> (f64, f64) {
        // H(e^{jw}) = B(e^{-jw}) / A(e^{-jw}) as (re, im)
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * omega.cos() + c[2] * (2.0 * omega).cos();
            let im = -c[1] * omega.sin() - c[2] * (2.0 * omega).sin();
            (re, im)
        };
        let (br, bi) = eval(&self.b);
        let (ar, ai) = eval(&self.a);
        let d = ar * ar + ai * ai;
        ((br * ar + bi * ai) / d, (bi * ar - br * ai) / d)
    }
}

/// Digital low-pass Butterworth designed from the analog prototype by the
/// bilinear transform with frequency pre-warping, as a cascade of sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub order: usize,
    pub cutoff: f64,
    pub sections: Vec<Section>,
}

impl Butterworth {
    pub fn design(spec: &FilterSpec) -> Result<Self> {
        if !(spec.cutoff > 0.0 && spec.cutoff < 1.0) {
            return Err(Error::CutoffOutOfRange(spec.cutoff));
        }
        if spec.order == 0 {
            return Err(Error::Config("filter order must be >= 1".into()));
        }
        let n = spec.order;
        let k = (std::f64::consts::FRAC_PI_2 * spec.cutoff).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(n.div_ceil(2));
        for i in 0..n / 2 {
            // prototype pair s^2 + a s + 1
            let a = 2.0 * (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * n) as f64).sin();
            let norm = 1.0 + a * k + k2;
            let b0 = k2 / norm;
            sections.push(Section {
                b: [b0, 2.0 * b0, b0],
                a: [1.0, 2.0 * (k2 - 1.0) / norm, (1.0 - a * k + k2) / norm],
            });
        }
        if n % 2 == 1 {
            let norm = 1.0 + k;
            let b0 = k / norm;
            sections.push(Section {
                b: [b0, b0, 0.0],
                a: [1.0, (k - 1.0) / norm, 0.0],
            });
        }
        Ok(Self {
            order: n,
            cutoff: spec.cutoff,
            sections,
        })
    }

    /// |H| at a normalized frequency (fraction of Nyquist).
    pub fn magnitude(&self, freq: f64) -> f64 {
        let omega = std::f64::consts::PI * freq;
        let (mut re, mut im) = (1.0, 0.0);
        for s in &self.sections {
            let (r, i) = s.response(omega);
            (re, im) = (re * r - im * i, re * i + im * r);
        }
        (re * re + im * im).sqrt()
    }

    /// Causal single pass, starting from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    /// Causal single pass with section states preset to the steady state of
    /// a constant input equal to the first sample.
    fn filter_settled(&self, y: &mut [f64]) {
        let level = y[0];
        for s in &self.sections {
            s.run(y, s.steady_state(level));
        }
    }

    /// Forward-backward filtering with odd reflective padding of
    /// `3 * order` samples on each end.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = 3 * self.order;
        let n = x.len();
        if n <= pad {
            return Err(Error::TooShort { len: n, min: pad + 1 });
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.filter_settled(&mut ext);
        ext.reverse();
        self.filter_settled(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase low-pass filtering of every state channel.
pub fn butterworth_zero_phase(data: &TrajectoryData, spec: &FilterSpec) -> Result<TrajectoryData> {
    let filter = Butterworth::design(spec)?;
    let channels = data
        .channels()
        .iter()
        .map(|c| filter.filtfilt(c))
        .collect::<Result<Vec<_>>>()?;
    data.map_channels(channels)
}

/// Filter (when given) then differentiate.
pub fn prepare(data: &TrajectoryData, filter: Option<&FilterSpec>) -> Result<TrajectoryData> {
    match filter {
        Some(spec) => differentiate(&butterworth_zero_phase(data, spec)?),
        None => differentiate(data),
    }
}
