use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::term::{TermDescriptor, DEFAULT_SINGULARITY_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTerm {
    pub term: TermDescriptor,
    pub coefficient: f64,
    #[serde(default)]
    pub coefficient_sd: f64,
}

impl ModelTerm {
    pub fn new(term: TermDescriptor, coefficient: f64) -> Self {
        Self {
            term,
            coefficient,
            coefficient_sd: 0.0,
        }
    }
}

/// A sparse constant-delay system: one list of weighted terms per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDelayModel {
    pub m: usize,
    pub equations: Vec<Vec<ModelTerm>>,
    /// Physical delay in seconds.
    pub delay: f64,
}

impl SparseDelayModel {
    pub fn new(equations: Vec<Vec<ModelTerm>>, delay: f64) -> Result<Self> {
        let model = Self {
            m: equations.len(),
            equations,
            delay,
        };
        model.validate()?;
        Ok(model)
    }

    /// A model with `m` states and no terms (constant dynamics).
    pub fn empty(m: usize, delay: f64) -> Self {
        Self {
            m,
            equations: vec![Vec::new(); m],
            delay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.equations.len() != self.m {
            return Err(Error::InvalidModel(format!(
                "{} equations for {} states",
                self.equations.len(),
                self.m
            )));
        }
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(Error::InvalidModel(format!("delay {} must be >= 0", self.delay)));
        }
        for t in self.equations.iter().flatten() {
            t.term.validate(self.m)?;
            if !t.coefficient.is_finite() {
                return Err(Error::InvalidModel(format!("coefficient of `{}` is not finite", t.term)));
            }
        }
        Ok(())
    }

    pub fn term_count(&self) -> usize {
        self.equations.iter().map(Vec::len).sum()
    }

    /// Evaluates the right-hand side into `out`.
    pub fn rhs_into(&self, x: &[f64], x_tau: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, eq) in out.iter_mut().zip(&self.equations) {
            let mut acc = 0.0;
            for t in eq {
                acc += t.coefficient * t.term.evaluate_with_floor(x, x_tau, DEFAULT_SINGULARITY_FLOOR)?;
            }
            *o = acc;
        }
        Ok(())
    }

    pub fn rhs(&self, x: &[f64], x_tau: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m];
        self.rhs_into(x, x_tau, &mut out)?;
        Ok(out)
    }

    /// Renders `dx<i>/dt = ...` lines followed by the delay.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

/// Evaluates `Σ θ_k f_k(x, x_tau)` for every equation of `model`.
pub fn rhs(model: &SparseDelayModel, x: &[f64], x_tau: &[f64]) -> Result<Vec<f64>> {
    model.rhs(x, x_tau)
}

pub(crate) fn format_coefficient(c: f64) -> String {
    let a = c.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{a:.3e}")
    } else {
        let s = format!("{a:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

pub(crate) fn render_equation(index: usize, terms: &[ModelTerm]) -> String {
    let mut s = format!("dx{}/dt =", index + 1);
    if terms.is_empty() {
        s.push_str(" 0");
        return s;
    }
    for (i, t) in terms.iter().enumerate() {
        let c = format_coefficient(t.coefficient);
        match (i, t.coefficient < 0.0) {
            (0, false) => s.push_str(&format!(" {c}*{}", t.term)),
            (0, true) => s.push_str(&format!(" -{c}*{}", t.term)),
            (_, false) => s.push_str(&format!(" + {c}*{}", t.term)),
            (_, true) => s.push_str(&format!(" - {c}*{}", t.term)),
        }
    }
    s
}

impl fmt::Display for SparseDelayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, eq) in self.equations.iter().enumerate() {
            write!(f, "{}", render_equation(i, eq))?;
            if i + 1 < self.equations.len() {
                writeln!(f)?;
            }
        }
        write!(f, ", tau = {}", format_coefficient(self.delay))
    }
}
