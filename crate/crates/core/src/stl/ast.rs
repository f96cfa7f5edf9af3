use std::fmt;

use serde::{Deserialize, Serialize};

use super::StlError;

/// Tolerance applied when converting second-valued interval bounds into step
/// indices, so that `0.3 / 0.1` lands on step 3 rather than 2.
const STEP_EPS: f64 = 1e-9;

/// A bounded time interval `[lo, hi]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, StlError> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
            return Err(StlError::MalformedInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Inclusive step range `ceil(lo / dt) ..= floor(hi / dt)`.
    pub fn steps(&self, dt: f64) -> Result<(usize, usize), StlError> {
        let first = (self.lo / dt - STEP_EPS).ceil().max(0.0);
        let last = (self.hi / dt + STEP_EPS).floor();
        if last < first {
            return Err(StlError::EmptyInterval { lo: self.lo, hi: self.hi, dt });
        }
        Ok((first as usize, last as usize))
    }
}

impl TryFrom<(f64, f64)> for Interval {
    type Error = StlError;

    fn try_from((lo, hi): (f64, f64)) -> Result<Self, Self::Error> {
        Interval::new(lo, hi)
    }
}

impl From<Interval> for (f64, f64) {
    fn from(i: Interval) -> Self {
        (i.lo, i.hi)
    }
}

/// Real-valued expression over the channels of a trace state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignalExpr {
    Channel(String),
    Const(f64),
    Negate(Box<SignalExpr>),
    Sum(Box<SignalExpr>, Box<SignalExpr>),
    Difference(Box<SignalExpr>, Box<SignalExpr>),
    Scale(f64, Box<SignalExpr>),
    EuclideanNorm(Vec<SignalExpr>),
    /// Affine map of `[lower, upper]` onto `[-1, 1]`, saturating outside.
    ClampScale { lower: f64, upper: f64, arg: Box<SignalExpr> },
}

impl SignalExpr {
    pub fn channel(name: impl Into<String>) -> Self {
        SignalExpr::Channel(name.into())
    }

    pub fn clamp_scale(arg: SignalExpr, lower: f64, upper: f64) -> Result<Self, StlError> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(StlError::BadClampBounds { lower, upper });
        }
        Ok(SignalExpr::ClampScale { lower, upper, arg: Box::new(arg) })
    }

    /// Conservative range of values the expression can take, by interval
    /// arithmetic. Channels are unbounded.
    pub fn value_range(&self) -> (f64, f64) {
        use SignalExpr::*;
        match self {
            Channel(_) => (f64::NEG_INFINITY, f64::INFINITY),
            Const(c) => (*c, *c),
            Negate(e) => {
                let (lo, hi) = e.value_range();
                (-hi, -lo)
            }
            Sum(a, b) => {
                let (al, ah) = a.value_range();
                let (bl, bh) = b.value_range();
                (al + bl, ah + bh)
            }
            Difference(a, b) => {
                let (al, ah) = a.value_range();
                let (bl, bh) = b.value_range();
                (al - bh, ah - bl)
            }
            Scale(c, e) => {
                let (lo, hi) = e.value_range();
                if *c == 0.0 {
                    (0.0, 0.0)
                } else if *c > 0.0 {
                    (c * lo, c * hi)
                } else {
                    (c * hi, c * lo)
                }
            }
            EuclideanNorm(args) => {
                let mut hi_sq = 0.0;
                for a in args {
                    let (lo, hi) = a.value_range();
                    hi_sq += lo.abs().max(hi.abs()).powi(2);
                }
                (0.0, hi_sq.sqrt())
            }
            ClampScale { .. } => (-1.0, 1.0),
        }
    }

    fn is_atomic(&self) -> bool {
        // constants are excluded: `-3` must read back as Const(-3), not Negate
        matches!(
            self,
            SignalExpr::Channel(_) | SignalExpr::EuclideanNorm(_) | SignalExpr::ClampScale { .. }
        )
    }
}

/// `h(s) <= threshold`, with the threshold restricted to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    expr: SignalExpr,
    threshold: f64,
}

impl Predicate {
    pub fn new(expr: SignalExpr, threshold: f64) -> Result<Self, StlError> {
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(StlError::ThresholdOutOfRange(threshold));
        }
        Ok(Self { expr, threshold })
    }

    /// `h(s) >= threshold`, stored as `-h(s) <= -threshold`.
    pub fn at_least(expr: SignalExpr, threshold: f64) -> Result<Self, StlError> {
        Self::new(SignalExpr::Negate(Box::new(expr)), -threshold)
    }

    pub fn expr(&self) -> &SignalExpr {
        &self.expr
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// True when `h` is guaranteed to stay inside `[-1, 1]`.
    pub fn is_normalized(&self) -> bool {
        let (lo, hi) = self.expr.value_range();
        lo >= -1.0 && hi <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    Predicate(Predicate),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn predicate(expr: SignalExpr, threshold: f64) -> Result<Self, StlError> {
        Predicate::new(expr, threshold).map(Formula::Predicate)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(children: Vec<Formula>) -> Result<Self, StlError> {
        if children.len() < 2 {
            return Err(StlError::TooFewOperands { op: "and", got: children.len() });
        }
        Ok(Formula::And(children))
    }

    pub fn or(children: Vec<Formula>) -> Result<Self, StlError> {
        if children.len() < 2 {
            return Err(StlError::TooFewOperands { op: "or", got: children.len() });
        }
        Ok(Formula::Or(children))
    }

    pub fn always(interval: Interval, f: Formula) -> Self {
        Formula::Always(interval, Box::new(f))
    }

    pub fn eventually(interval: Interval, f: Formula) -> Self {
        Formula::Eventually(interval, Box::new(f))
    }

    pub fn until(interval: Interval, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until(interval, Box::new(lhs), Box::new(rhs))
    }

    /// All predicates in the formula, in left-to-right order.
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates<'a>(&'a self, out: &mut Vec<&'a Predicate>) {
        match self {
            Formula::True => {}
            Formula::Predicate(p) => out.push(p),
            Formula::Not(f) | Formula::Always(_, f) | Formula::Eventually(_, f) => {
                f.collect_predicates(out)
            }
            Formula::And(fs) | Formula::Or(fs) => {
                fs.iter().for_each(|f| f.collect_predicates(out))
            }
            Formula::Until(_, a, b) => {
                a.collect_predicates(out);
                b.collect_predicates(out);
            }
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl fmt::Display for SignalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SignalExpr::*;
        match self {
            Channel(name) => write!(f, "{name}"),
            Const(c) => write!(f, "{c}"),
            Negate(e) if e.is_atomic() => write!(f, "-{e}"),
            Negate(e) => write!(f, "-({e})"),
            Sum(a, b) => write!(f, "({a} + {b})"),
            Difference(a, b) => write!(f, "({a} - {b})"),
            Scale(c, e) if e.is_atomic() => write!(f, "{c} * {e}"),
            Scale(c, e) => write!(f, "{c} * ({e})"),
            EuclideanNorm(args) => {
                write!(f, "norm(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            ClampScale { lower, upper, arg } => write!(f, "clamp({arg}, {lower}, {upper})"),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= {}", self.expr, self.threshold)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Predicate(p) => write!(f, "{p}"),
            Formula::Not(inner) => {
                write!(f, "!")?;
                write_operand(f, inner)
            }
            Formula::And(fs) => write_chain(f, fs, " & "),
            Formula::Or(fs) => write_chain(f, fs, " | "),
            Formula::Always(i, inner) => {
                write!(f, "alw{i} ")?;
                write_operand(f, inner)
            }
            Formula::Eventually(i, inner) => {
                write!(f, "ev{i} ")?;
                write_operand(f, inner)
            }
            Formula::Until(i, a, b) => {
                write!(f, "(")?;
                write_operand(f, a)?;
                write!(f, " until{i} ")?;
                write_operand(f, b)?;
                write!(f, ")")
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, g: &Formula) -> fmt::Result {
    match g {
        Formula::Predicate(_) => write!(f, "({g})"),
        _ => write!(f, "{g}"),
    }
}

fn write_chain(f: &mut fmt::Formatter<'_>, fs: &[Formula], sep: &str) -> fmt::Result {
    write!(f, "(")?;
    for (i, g) in fs.iter().enumerate() {
        if i > 0 {
            write!(f, "{sep}")?;
        }
        write_operand(f, g)?;
    }
    write!(f, ")")
}
