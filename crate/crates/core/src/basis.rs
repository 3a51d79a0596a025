//! Delay augmentation, candidate libraries and the correlation gate.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::term::{parse_term, TermDescriptor, DEFAULT_SINGULARITY_FLOOR};
use crate::trajectory::TrajectoryData;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCatalog {
    terms: Vec<TermDescriptor>,
    names: Vec<String>,
}

impl CandidateCatalog {
    pub fn new(terms: Vec<TermDescriptor>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidCatalog("catalog is empty".into()));
        }
        let names: Vec<String> = terms.iter().map(ToString::to_string).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidCatalog(format!("duplicate candidate `{n}`")));
            }
        }
        Ok(Self { terms, names })
    }

    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let terms = items
            .iter()
            .map(|s| parse_term(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    pub fn validate_for(&self, m: usize) -> Result<()> {
        for t in &self.terms {
            t.validate(m).map_err(|e| Error::InvalidCatalog(e.to_string()))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[TermDescriptor] {
        &self.terms
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// A catalog without the listed column indices.
    pub fn without(&self, drop: &[usize]) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, t)| *t)
            .collect();
        Self::new(terms)
    }
}

/// Rows of the delay-augmented data: current state, delayed state, target.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRows {
    pub tau_index: usize,
    /// Index of the first retained sample.
    pub row_offset: usize,
    pub current: Vec<Vec<f64>>,
    pub delayed: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl AugmentedRows {
    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }
}

/// Pairs each sample `i >= tau_index` with the sample `tau_index` steps
/// earlier. Fails when fewer than `min_rows` rows remain.
pub fn augment(data: &TrajectoryData, tau_index: usize, min_rows: usize) -> Result<AugmentedRows> {
    let n = data.len();
    let derivs = data.derivatives().ok_or(Error::MissingDerivatives)?;
    if tau_index == 0 {
        return Err(Error::Config("delay index must be >= 1".into()));
    }
    let rows = n.saturating_sub(tau_index);
    if tau_index > n.saturating_sub(2) || rows < min_rows.max(1) {
        return Err(Error::DelayTooLarge {
            tau_index,
            rows,
            columns: min_rows,
        });
    }
    let mut out = AugmentedRows {
        tau_index,
        row_offset: tau_index,
        current: Vec::with_capacity(rows),
        delayed: Vec::with_capacity(rows),
        targets: Vec::with_capacity(rows),
    };
    for i in tau_index..n {
        out.current.push(data.row(i));
        out.delayed.push(data.row(i - tau_index));
        out.targets.push(derivs.iter().map(|c| c[i]).collect());
    }
    Ok(out)
}

/// The numeric library `L_tau` for one target channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedLibrary {
    pub tau_index: usize,
    /// Sample index of the first row.
    pub row_offset: usize,
    pub matrix: DMatrix<f64>,
    pub target: DVector<f64>,
    pub names: Vec<String>,
}

impl EvaluatedLibrary {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn columns(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Evaluates every candidate on the rows produced by [`augment`] and pairs
/// them with derivative channel `channel`.
pub fn evaluate_library(
    data: &TrajectoryData,
    catalog: &CandidateCatalog,
    tau_index: usize,
    channel: usize,
) -> Result<EvaluatedLibrary> {
    let rows = augment(data, tau_index, catalog.len())?;
    let k = catalog.len();
    let mut matrix = DMatrix::zeros(rows.len(), k);
    for (r, (x, xt)) in rows.current.iter().zip(&rows.delayed).enumerate() {
        for (c, term) in catalog.terms().iter().enumerate() {
            matrix[(r, c)] = term.evaluate(x, xt)?;
        }
    }
    let target = DVector::from_iterator(rows.len(), rows.targets.iter().map(|t| t[channel]));
    let lib = EvaluatedLibrary {
        tau_index,
        row_offset: rows.row_offset,
        matrix,
        target,
        names: catalog.names().to_vec(),
    };
    check_finite(&lib)?;
    Ok(lib)
}

fn check_finite(lib: &EvaluatedLibrary) -> Result<()> {
    for (c, col) in lib.matrix.column_iter().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCatalog(format!(
                "candidate `{}` is not finite on this data",
                lib.names[c]
            )));
        }
    }
    if lib.target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite derivative".into()));
    }
    Ok(())
}

/// Candidate values precomputed once per sample so that the library for
/// any delay is a set of shifted slices (cross products excepted).
#[derive(Debug, Clone)]
pub struct LibraryBuilder {
    catalog: CandidateCatalog,
    /// `f_k(x(t_i))` for every sample `i`; empty for cross products.
    base: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
    target: Vec<f64>,
    samples: usize,
}

/// A column of a library: borrowed when it is a shifted base column.
pub enum Column<'a> {
    Borrowed(&'a [f64]),
    Owned(Vec<f64>),
}

impl std::ops::Deref for Column<'_> {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        match self {
            Column::Borrowed(s) => s,
            Column::Owned(v) => v,
        }
    }
}

/// Regression rows `start, start + step, ...` below `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RowRange {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl RowRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end, step: 1 }
    }

    pub fn with_step(self, step: usize) -> Self {
        Self {
            step: step.max(1),
            ..self
        }
    }

    pub fn len(&self) -> usize {
        if self.end <= self.start {
            0
        } else {
            (self.end - self.start).div_ceil(self.step)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> std::iter::StepBy<std::ops::Range<usize>> {
        (self.start..self.end).step_by(self.step)
    }
}

impl LibraryBuilder {
    pub fn new(data: &TrajectoryData, catalog: &CandidateCatalog, channel: usize) -> Result<Self> {
        catalog.validate_for(data.m())?;
        let target = data.derivative_channel(channel)?.to_vec();
        let states = data.channels().to_vec();
        let base = catalog
            .terms()
            .iter()
            .map(|term| {
                if term.is_cross() {
                    return Ok(Vec::new());
                }
                let values = states[term.var_index]
                    .iter()
                    .map(|&v| term.apply(v, DEFAULT_SINGULARITY_FLOOR))
                    .collect::<Result<Vec<f64>>>()?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidCatalog(format!("candidate `{term}` is not finite on this data")));
                }
                Ok(values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            catalog: catalog.clone(),
            base,
            states,
            target,
            samples: data.len(),
        })
    }

    pub fn catalog(&self) -> &CandidateCatalog {
        &self.catalog
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn target(&self, rows: RowRange) -> Column<'_> {
        if rows.step == 1 {
            Column::Borrowed(&self.target[rows.start..rows.end])
        } else {
            Column::Owned(rows.indices().map(|i| self.target[i]).collect())
        }
    }

    /// Column `k` of `L_tau` over `rows`. Delayed values before the first
    /// sample take the first sample, i.e. the series is assumed to start
    /// from a constant history.
    pub fn column(&self, k: usize, tau: usize, rows: RowRange) -> Column<'_> {
        debug_assert!(rows.end <= self.samples);
        let term = &self.catalog.terms()[k];
        if term.is_cross() {
            let x = &self.states[term.var_index];
            Column::Owned(rows.indices().map(|i| x[i] * x[i.saturating_sub(tau)]).collect())
        } else if term.delayed {
            let base = &self.base[k];
            if rows.start >= tau && rows.step == 1 {
                Column::Borrowed(&base[rows.start - tau..rows.end - tau])
            } else {
                Column::Owned(rows.indices().map(|i| base[i.saturating_sub(tau)]).collect())
            }
        } else if rows.step == 1 {
            Column::Borrowed(&self.base[k][rows.start..rows.end])
        } else {
            Column::Owned(rows.indices().map(|i| self.base[k][i]).collect())
        }
    }

    pub fn library(&self, tau: usize, rows: RowRange) -> Result<EvaluatedLibrary> {
        if tau == 0 || tau >= self.samples || rows.end > self.samples || rows.len() < self.catalog.len() {
            return Err(Error::DelayTooLarge {
                tau_index: tau,
                rows: rows.end.min(self.samples).saturating_sub(rows.start),
                columns: self.catalog.len(),
            });
        }
        let k = self.catalog.len();
        let mut matrix = DMatrix::zeros(rows.len(), k);
        for c in 0..k {
            matrix.column_mut(c).copy_from_slice(&self.column(c, tau, rows));
        }
        let lib = EvaluatedLibrary {
            tau_index: tau,
            row_offset: rows.start,
            matrix,
            target: DVector::from_column_slice(&self.target(rows)),
            names: self.catalog.names().to_vec(),
        };
        check_finite(&lib)?;
        Ok(lib)
    }
}

/// Bounded FIFO cache of libraries keyed by delay index and row range.
pub struct LibraryCache {
    capacity: usize,
    inner: Mutex<CacheInner>,
}

#[derive(Default)]
struct CacheInner {
    map: HashMap<(usize, RowRange), Arc<EvaluatedLibrary>>,
    order: VecDeque<(usize, RowRange)>,
}

pub const DEFAULT_CACHE_CAPACITY: usize = 256;

impl Default for LibraryCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

impl LibraryCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            inner: Mutex::new(CacheInner::default()),
        }
    }

    pub fn get_or_build(
        &self,
        builder: &LibraryBuilder,
        tau: usize,
        rows: RowRange,
    ) -> Result<Arc<EvaluatedLibrary>> {
        let key = (tau, rows);
        if let Some(lib) = self.inner.lock().expect("cache lock").map.get(&key) {
            return Ok(Arc::clone(lib));
        }
        let lib = Arc::new(builder.library(tau, rows)?);
        let mut inner = self.inner.lock().expect("cache lock");
        if !inner.map.contains_key(&key) {
            if inner.order.len() >= self.capacity {
                if let Some(old) = inner.order.pop_front() {
                    inner.map.remove(&old);
                }
            }
            inner.order.push_back(key);
            inner.map.insert(key, Arc::clone(&lib));
        }
        Ok(lib)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedPair {
    pub first: usize,
    pub second: usize,
    pub first_name: String,
    pub second_name: String,
    pub correlation: f64,
}

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.99;

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// All column pairs whose |Pearson correlation| reaches `threshold`.
/// Constant columns have no defined correlation and are skipped.
pub fn correlation_screen(lib: &EvaluatedLibrary, threshold: f64) -> Vec<CorrelatedPair> {
    let k = lib.columns();
    let cols: Vec<Vec<f64>> = (0..k).map(|c| lib.matrix.column(c).iter().copied().collect()).collect();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if let Some(r) = pearson(&cols[i], &cols[j]) {
                if r.abs() >= threshold {
                    pairs.push(CorrelatedPair {
                        first: i,
                        second: j,
                        first_name: lib.names[i].clone(),
                        second_name: lib.names[j].clone(),
                        correlation: r,
                    });
                }
            }
        }
    }
    pairs
}

/// Columns removed by the auto-drop rule: the higher index of each pair,
/// applied greedily so a column already dropped resolves its pairs.
pub fn auto_drop_columns(pairs: &[CorrelatedPair]) -> Vec<usize> {
    let mut dropped: Vec<usize> = Vec::new();
    for p in pairs {
        if dropped.contains(&p.first) || dropped.contains(&p.second) {
            continue;
        }
        dropped.push(p.second);
    }
    dropped.sort_unstable();
    dropped
}
