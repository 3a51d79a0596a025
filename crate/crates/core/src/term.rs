//! Candidate function descriptors and the term grammar.
//!
//! Terms are written with 1-based state names:
//!
//! ```text
//! x1            x1_tau          x1^2          x1_tau^2
//! x1*x1_tau     exp(-x1)        exp(x1_tau)   sin(x1)     cos(x1_tau)
//! 1/x1          1/x1_tau^2      hill(x1_tau, 10)
//! ```
//!
//! `hill(v, p)` is `v / (1 + v^p)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Operands of reciprocal terms below this magnitude are rejected.
pub const DEFAULT_SINGULARITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermKind {
    Identity,
    Square,
    /// `x_i * x_i(t - delay)`.
    CrossProduct,
    ExpNeg,
    ExpPos,
    Sin,
    Cos,
    Reciprocal,
    ReciprocalSquare,
    /// `v / (1 + v^p)`.
    RationalHill(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermDescriptor {
    pub kind: TermKind,
    pub var_index: usize,
    pub delayed: bool,
}

impl TermDescriptor {
    pub fn new(kind: TermKind, var_index: usize, delayed: bool) -> Self {
        // the second operand of a cross product is always the delayed copy
        let delayed = delayed || kind == TermKind::CrossProduct;
        Self {
            kind,
            var_index,
            delayed,
        }
    }

    pub fn current(kind: TermKind, var_index: usize) -> Self {
        Self::new(kind, var_index, false)
    }

    pub fn lagged(kind: TermKind, var_index: usize) -> Self {
        Self::new(kind, var_index, true)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.var_index >= m {
            return Err(Error::InvalidModel(format!(
                "term `{self}` refers to state {} but the system has {m}",
                self.var_index + 1
            )));
        }
        if let TermKind::RationalHill(0) = self.kind {
            return Err(Error::InvalidModel(format!("term `{self}` needs a power >= 1")));
        }
        Ok(())
    }

    /// True when the value depends on both the current and the delayed state.
    pub fn is_cross(&self) -> bool {
        self.kind == TermKind::CrossProduct
    }

    /// Applies the term's scalar function to a single operand. Not meaningful
    /// for cross products, which need both operands.
    pub fn apply(&self, v: f64, floor: f64) -> Result<f64> {
        Ok(match self.kind {
            TermKind::Identity => v,
            TermKind::Square => v * v,
            TermKind::CrossProduct => v,
            TermKind::ExpNeg => (-v).exp(),
            TermKind::ExpPos => v.exp(),
            TermKind::Sin => v.sin(),
            TermKind::Cos => v.cos(),
            TermKind::Reciprocal => {
                self.check_operand(v, floor)?;
                1.0 / v
            }
            TermKind::ReciprocalSquare => {
                self.check_operand(v, floor)?;
                1.0 / (v * v)
            }
            TermKind::RationalHill(p) => v / (1.0 + v.powi(p as i32)),
        })
    }

    fn check_operand(&self, v: f64, floor: f64) -> Result<()> {
        if v.abs() < floor {
            Err(Error::SingularOperand {
                term: self.to_string(),
                value: v,
            })
        } else {
            Ok(())
        }
    }

    pub fn evaluate(&self, x: &[f64], x_tau: &[f64]) -> Result<f64> {
        self.evaluate_with_floor(x, x_tau, DEFAULT_SINGULARITY_FLOOR)
    }

    pub fn evaluate_with_floor(&self, x: &[f64], x_tau: &[f64], floor: f64) -> Result<f64> {
        let i = self.var_index;
        if self.is_cross() {
            return Ok(x[i] * x_tau[i]);
        }
        let v = if self.delayed { x_tau[i] } else { x[i] };
        self.apply(v, floor)
    }
}

/// Evaluates `term` at the current state `x` and delayed state `x_tau`.
pub fn evaluate_term(term: &TermDescriptor, x: &[f64], x_tau: &[f64]) -> Result<f64> {
    term.evaluate(x, x_tau)
}

impl fmt::Display for TermDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.var_index + 1;
        let v = if self.delayed {
            format!("x{n}_tau")
        } else {
            format!("x{n}")
        };
        match self.kind {
            TermKind::Identity => write!(f, "{v}"),
            TermKind::Square => write!(f, "{v}^2"),
            TermKind::CrossProduct => write!(f, "x{n}*x{n}_tau"),
            TermKind::ExpNeg => write!(f, "exp(-{v})"),
            TermKind::ExpPos => write!(f, "exp({v})"),
            TermKind::Sin => write!(f, "sin({v})"),
            TermKind::Cos => write!(f, "cos({v})"),
            TermKind::Reciprocal => write!(f, "1/{v}"),
            TermKind::ReciprocalSquare => write!(f, "1/{v}^2"),
            TermKind::RationalHill(p) => write!(f, "hill({v}, {p})"),
        }
    }
}

impl FromStr for TermDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_term(s)
    }
}

impl Serialize for TermDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TermDescriptor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses one term string. Errors carry the 1-based column of the problem.
pub fn parse_term(input: &str) -> Result<TermDescriptor> {
    let mut p = Parser {
        input,
        bytes: input.as_bytes(),
        pos: 0,
    };
    let term = p.term()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(term)
}

struct Parser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::TermParse {
            input: self.input.to_string(),
            position: self.pos + 1,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.input[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{token}`")))
        }
    }

    fn number(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer"));
        }
        self.input[start..self.pos].parse().map_err(|_| {
            self.pos = start;
            self.error("integer out of range")
        })
    }

    /// `x<i>` or `x<i>_tau`; returns (0-based index, delayed).
    fn variable(&mut self) -> Result<(usize, bool)> {
        if self.peek() != Some(b'x') {
            return Err(self.error("expected a state variable `x<i>`"));
        }
        self.pos += 1;
        let at = self.pos;
        let n = self.number()?;
        if n == 0 {
            self.pos = at;
            return Err(self.error("state variables are numbered from 1"));
        }
        let delayed = self.input[self.pos..].starts_with("_tau");
        if delayed {
            self.pos += 4;
        }
        Ok((n as usize - 1, delayed))
    }

    fn term(&mut self) -> Result<TermDescriptor> {
        use TermKind::*;
        match self.peek() {
            Some(b'x') => {
                let (i, delayed) = self.variable()?;
                if self.eat("^") {
                    self.skip_ws();
                let at = self.pos;
                    let p = self.number()?;
                    if p != 2 {
                        self.pos = at;
                        return Err(self.error("only the power 2 is supported"));
                    }
                    return Ok(TermDescriptor::new(Square, i, delayed));
                }
                if self.eat("*") {
                    if delayed {
                        return Err(self.error("cross products are written `x<i>*x<i>_tau`"));
                    }
                    self.skip_ws();
                let at = self.pos;
                    let (j, second_delayed) = self.variable()?;
                    if j != i || !second_delayed {
                        self.pos = at;
                        return Err(self.error("cross products pair a state with its own delayed copy"));
                    }
                    return Ok(TermDescriptor::lagged(CrossProduct, i));
                }
                Ok(TermDescriptor::new(Identity, i, delayed))
            }
            Some(b'e') => {
                self.expect("exp")?;
                self.expect("(")?;
                let kind = if self.eat("-") { ExpNeg } else { ExpPos };
                let (i, delayed) = self.variable()?;
                self.expect(")")?;
                Ok(TermDescriptor::new(kind, i, delayed))
            }
            Some(b's') | Some(b'c') => {
                let kind = if self.eat("sin") {
                    Sin
                } else if self.eat("cos") {
                    Cos
                } else {
                    return Err(self.error("unknown function"));
                };
                self.expect("(")?;
                let (i, delayed) = self.variable()?;
                self.expect(")")?;
                Ok(TermDescriptor::new(kind, i, delayed))
            }
            Some(b'h') => {
                self.expect("hill")?;
                self.expect("(")?;
                let (i, delayed) = self.variable()?;
                self.expect(",")?;
                self.skip_ws();
                let at = self.pos;
                let p = self.number()?;
                if p == 0 {
                    self.pos = at;
                    return Err(self.error("hill power must be >= 1"));
                }
                self.expect(")")?;
                Ok(TermDescriptor::new(RationalHill(p), i, delayed))
            }
            Some(b'1') => {
                self.expect("1")?;
                self.expect("/")?;
                let (i, delayed) = self.variable()?;
                if self.eat("^") {
                    self.skip_ws();
                let at = self.pos;
                    let p = self.number()?;
                    if p != 2 {
                        self.pos = at;
                        return Err(self.error("only 1/x and 1/x^2 are supported"));
                    }
                    return Ok(TermDescriptor::new(ReciprocalSquare, i, delayed));
                }
                Ok(TermDescriptor::new(Reciprocal, i, delayed))
            }
            Some(_) => Err(self.error("unrecognized term")),
            None => Err(self.error("empty term")),
        }
    }
}
