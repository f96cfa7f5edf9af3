//! Arithmetic-geometric mean (AGM) robustness.
//!
//! Conjunctions and `always` take the geometric mean of `1 + η` when every
//! operand is strictly positive and the arithmetic mean of the negative parts
//! otherwise. Disjunction, `eventually` and `until` are obtained by duality,
//! so the sign of the result always agrees with boolean satisfaction whenever
//! it is non-zero.
//!
//! Predicates `h <= u` score `(u - h) / 2`: positive exactly when satisfied.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::stl::eval::check_horizon;
use crate::stl::{eval_signal, Formula, StlError, Trace};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Robustness(pub f64);

impl Robustness {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_satisfied(self) -> bool {
        self.0 > 0.0
    }
}

impl fmt::Display for Robustness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `[v]+ = max(0, v)`
pub fn clipped_pos(v: f64) -> f64 {
    v.max(0.0)
}

/// `[v]- = -[-v]+ = min(0, v)`
pub fn clipped_neg(v: f64) -> f64 {
    -clipped_pos(-v)
}

/// Running state of an AGM conjunction over a stream of operand values.
#[derive(Debug, Clone, Copy, Default)]
struct Conjunction {
    count: usize,
    all_positive: bool,
    sum_log: f64,
    sum_neg: f64,
}

impl Conjunction {
    fn new() -> Self {
        Self { count: 0, all_positive: true, sum_log: 0.0, sum_neg: 0.0 }
    }

    fn push(&mut self, v: f64) {
        self.count += 1;
        // zeros route to the arithmetic branch
        self.all_positive &= v > 0.0;
        self.sum_log += v.ln_1p();
        self.sum_neg += clipped_neg(v);
    }

    fn value(&self) -> f64 {
        debug_assert!(self.count > 0);
        let m = self.count as f64;
        if self.all_positive {
            (self.sum_log / m).exp_m1()
        } else {
            self.sum_neg / m
        }
    }
}

/// AGM conjunction of operand robustness values.
pub fn agm_and(values: &[f64]) -> f64 {
    let mut c = Conjunction::new();
    values.iter().for_each(|&v| c.push(v));
    c.value()
}

/// AGM disjunction, `-and(-v)`.
pub fn agm_or(values: &[f64]) -> f64 {
    let mut c = Conjunction::new();
    values.iter().for_each(|&v| c.push(-v));
    -c.value()
}

/// Robustness of `f` on `tr` at step `t`.
pub fn agm_rob(f: &Formula, tr: &Trace, t: usize) -> Result<Robustness, StlError> {
    check_horizon(f, tr, t)?;
    eval(f, tr, t).map(Robustness)
}

fn eval(f: &Formula, tr: &Trace, t: usize) -> Result<f64, StlError> {
    Ok(match f {
        Formula::True => 1.0,
        Formula::Predicate(p) => 0.5 * (p.threshold() - eval_signal(p.expr(), tr, t)?),
        Formula::Not(g) => -eval(g, tr, t)?,
        Formula::And(gs) => {
            let mut c = Conjunction::new();
            for g in gs {
                c.push(eval(g, tr, t)?);
            }
            c.value()
        }
        Formula::Or(gs) => {
            let mut c = Conjunction::new();
            for g in gs {
                c.push(-eval(g, tr, t)?);
            }
            -c.value()
        }
        Formula::Always(i, g) => {
            let (a, b) = i.steps(tr.dt())?;
            let mut c = Conjunction::new();
            for k in a..=b {
                c.push(eval(g, tr, t + k)?);
            }
            c.value()
        }
        Formula::Eventually(i, g) => {
            let (a, b) = i.steps(tr.dt())?;
            let mut c = Conjunction::new();
            for k in a..=b {
                c.push(-eval(g, tr, t + k)?);
            }
            -c.value()
        }
        Formula::Until(i, lhs, rhs) => {
            let (a, b) = i.steps(tr.dt())?;
            // prefix: always-aggregate of lhs over t .. t+k-1
            let mut prefix = Conjunction::new();
            for j in 0..a {
                prefix.push(eval(lhs, tr, t + j)?);
            }
            let mut outer = Conjunction::new();
            for k in a..=b {
                let witness = eval(rhs, tr, t + k)?;
                let candidate = if prefix.count == 0 {
                    witness
                } else {
                    agm_and(&[witness, prefix.value()])
                };
                outer.push(-candidate);
                if k < b {
                    prefix.push(eval(lhs, tr, t + k)?);
                }
            }
            -outer.value()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{bool_sat, parse_formula, Interval, SignalExpr};

    #[test]
    fn clipping() {
        assert_eq!(clipped_pos(-2.0), 0.0);
        assert_eq!(clipped_pos(3.0), 3.0);
        assert_eq!(clipped_neg(-2.0), -2.0);
        assert_eq!(clipped_neg(3.0), 0.0);
    }

    #[test]
    fn true_scores_one() {
        let tr = Trace::new(1.0, [("x", vec![0.0])]).unwrap();
        assert_eq!(agm_rob(&Formula::True, &tr, 0).unwrap().value(), 1.0);
    }

    #[test]
    fn predicate_margin_is_halved() {
        let tr = Trace::new(1.0, [("h", vec![0.3])]).unwrap();
        let f = Formula::predicate(SignalExpr::channel("h"), 0.5).unwrap();
        let r = agm_rob(&f, &tr, 0).unwrap().value();
        assert!((r - 0.1).abs() < 1e-12);
        assert!(bool_sat(&f, &tr, 0).unwrap());
    }

    #[test]
    fn conjunction_branches() {
        assert!((agm_and(&[0.2, 0.2]) - 0.2).abs() < 1e-12);
        assert!((agm_and(&[-0.4, 0.6]) - -0.2).abs() < 1e-12);
        assert!((agm_and(&[0.2, -0.1, 0.3]) - -0.1 / 3.0).abs() < 1e-12);
        assert_eq!(agm_and(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(agm_and(&[0.0, 0.5]), 0.0);
    }

    #[test]
    fn always_over_steps() {
        // child values 0.2, -0.1, 0.3 from predicate (0.5 - h) / 2 with h = u - 2v
        let hs: Vec<f64> = [0.2, -0.1, 0.3].iter().map(|v| 0.5 - 2.0 * v).collect();
        let tr = Trace::new(1.0, [("h", hs)]).unwrap();
        let f = Formula::always(
            Interval::new(0.0, 2.0).unwrap(),
            Formula::predicate(SignalExpr::channel("h"), 0.5).unwrap(),
        );
        let r = agm_rob(&f, &tr, 0).unwrap().value();
        assert!((r - (-0.1 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn negation_is_exact() {
        let tr = Trace::new(0.5, [("x", vec![0.1, -0.3, 0.7, 0.2])]).unwrap();
        let f = parse_formula("ev[0,1] (clamp(x, -1, 1) <= 0.25) & alw[0, 0.5] (clamp(x, -2, 2) >= 0)").unwrap();
        let r = agm_rob(&f, &tr, 0).unwrap().value();
        let n = agm_rob(&Formula::not(f), &tr, 0).unwrap().value();
        assert_eq!(n, -r);
    }

    #[test]
    fn long_always_does_not_underflow() {
        let tr = Trace::new(1.0, [("x", vec![-0.9; 5000])]).unwrap();
        let f = parse_formula("alw[0, 4999] (clamp(x, -1, 1) <= 0)").unwrap();
        let r = agm_rob(&f, &tr, 0).unwrap().value();
        assert!((r - 0.45).abs() < 1e-10);
    }

    #[test]
    fn until_sign_matches_boolean() {
        let tr = Trace::new(
            1.0,
            [("a", vec![0.5, 0.5, -0.5, 0.5]), ("b", vec![-0.5, -0.5, -0.5, 0.5])],
        )
        .unwrap();
        for text in ["(a >= 0) until[0,3] (b >= 0)", "(b <= 0) until[0,3] (b >= 0)", "(a >= 0) until[1,1] (a >= 0)"] {
            let f = parse_formula(text).unwrap();
            let r = agm_rob(&f, &tr, 0).unwrap().value();
            assert_eq!(r > 0.0, bool_sat(&f, &tr, 0).unwrap(), "{text}: {r}");
            assert!(r != 0.0);
        }
    }

    #[test]
    fn horizon_violation_reported() {
        let tr = Trace::new(1.0, [("x", vec![0.0; 3])]).unwrap();
        let f = parse_formula("ev[0,3] (x <= 0)").unwrap();
        assert!(matches!(agm_rob(&f, &tr, 0), Err(StlError::HorizonViolation { .. })));
    }
}
