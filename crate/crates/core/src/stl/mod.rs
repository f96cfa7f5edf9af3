//! Signal temporal logic: formula syntax, sampled traces and boolean
//! satisfaction.
//!
//! Formulas are written in a small textual language:
//!
//! ```text
//! # reach the cube within one second
//! ev[0, 1] (clamp(norm(r.x - c.x, r.y - c.y, r.z - c.z), 0, 0.1) <= 0)
//! ```
//!
//! Temporal operators are `alw[a, b]`, `ev[a, b]` and the infix
//! `lhs until[a, b] rhs`; intervals are given in seconds and mapped onto
//! inclusive step ranges using the trace sampling period. Boolean
//! connectives are `!`, `&` and `|`. Predicates compare a signal expression
//! against a threshold in `[-1, 1]` with `<=` or `>=`.

mod ast;
pub(crate) mod eval;
mod parse;
mod trace;

pub use ast::{Formula, Interval, Predicate, SignalExpr};
pub use eval::{bool_sat, eval_signal, required_horizon};
pub use parse::{parse_formula, parse_formula_with_warnings, ParseError, ParseWarning, Parsed};
pub use trace::Trace;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("interval bounds must be finite with 0 <= lo <= hi, got [{lo}, {hi}]")]
    MalformedInterval { lo: f64, hi: f64 },
    #[error("interval [{lo}, {hi}] contains no sample at dt = {dt}")]
    EmptyInterval { lo: f64, hi: f64, dt: f64 },
    #[error("predicate threshold {0} outside [-1, 1]")]
    ThresholdOutOfRange(f64),
    #[error("signal constant must be finite, got {0}")]
    NonFiniteConstant(f64),
    #[error("clamp bounds must satisfy lower < upper, got [{lower}, {upper}]")]
    BadClampBounds { lower: f64, upper: f64 },
    #[error("{op} needs at least two operands, got {got}")]
    TooFewOperands { op: &'static str, got: usize },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("formula looks at step {step} but the trace has {len} samples")]
    HorizonViolation { step: usize, len: usize },
    #[error("signal expression evaluated to a non-finite value at step {0}")]
    NonFiniteSignal(usize),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
}
