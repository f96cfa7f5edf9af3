use super::{Formula, SignalExpr, StlError, Trace};

/// Value of `e` at step `t` of the trace.
pub fn eval_signal(e: &SignalExpr, tr: &Trace, t: usize) -> Result<f64, StlError> {
    if t >= tr.len() {
        return Err(StlError::HorizonViolation { step: t, len: tr.len() });
    }
    let v = eval_unchecked(e, tr, t)?;
    if !v.is_finite() {
        return Err(StlError::NonFiniteSignal(t));
    }
    Ok(v)
}

fn eval_unchecked(e: &SignalExpr, tr: &Trace, t: usize) -> Result<f64, StlError> {
    use SignalExpr::*;
    Ok(match e {
        Channel(name) => tr
            .channel(name)
            .ok_or_else(|| StlError::UnknownChannel(name.clone()))?[t],
        Const(c) => *c,
        Negate(a) => -eval_unchecked(a, tr, t)?,
        Sum(a, b) => eval_unchecked(a, tr, t)? + eval_unchecked(b, tr, t)?,
        Difference(a, b) => eval_unchecked(a, tr, t)? - eval_unchecked(b, tr, t)?,
        Scale(c, a) => c * eval_unchecked(a, tr, t)?,
        EuclideanNorm(args) => {
            let mut sq = 0.0;
            for a in args {
                sq += eval_unchecked(a, tr, t)?.powi(2);
            }
            sq.sqrt()
        }
        ClampScale { lower, upper, arg } => {
            let v = eval_unchecked(arg, tr, t)?;
            (2.0 * (v - lower) / (upper - lower) - 1.0).clamp(-1.0, 1.0)
        }
    })
}

/// Number of steps past `t` that evaluating `f` at `t` inspects.
pub fn required_horizon(f: &Formula, dt: f64) -> Result<usize, StlError> {
    Ok(match f {
        Formula::True | Formula::Predicate(_) => 0,
        Formula::Not(g) => required_horizon(g, dt)?,
        Formula::And(gs) | Formula::Or(gs) => {
            let mut h = 0;
            for g in gs {
                h = h.max(required_horizon(g, dt)?);
            }
            h
        }
        Formula::Always(i, g) | Formula::Eventually(i, g) => i.steps(dt)?.1 + required_horizon(g, dt)?,
        Formula::Until(i, lhs, rhs) => {
            let (_, last) = i.steps(dt)?;
            let rhs_h = last + required_horizon(rhs, dt)?;
            // the left operand is only needed strictly before the witness step
            let lhs_h = if last >= 1 { last - 1 + required_horizon(lhs, dt)? } else { 0 };
            rhs_h.max(lhs_h)
        }
    })
}

/// Checks that `f` evaluated at `t` stays inside the trace.
pub(crate) fn check_horizon(f: &Formula, tr: &Trace, t: usize) -> Result<(), StlError> {
    let h = required_horizon(f, tr.dt())?;
    let last = t + h;
    if last >= tr.len() {
        return Err(StlError::HorizonViolation { step: last, len: tr.len() });
    }
    Ok(())
}

/// Boolean satisfaction of `f` by `tr` at step `t`.
pub fn bool_sat(f: &Formula, tr: &Trace, t: usize) -> Result<bool, StlError> {
    check_horizon(f, tr, t)?;
    sat(f, tr, t)
}

fn sat(f: &Formula, tr: &Trace, t: usize) -> Result<bool, StlError> {
    Ok(match f {
        Formula::True => true,
        Formula::Predicate(p) => eval_signal(p.expr(), tr, t)? - p.threshold() <= 0.0,
        Formula::Not(g) => !sat(g, tr, t)?,
        Formula::And(gs) => {
            for g in gs {
                if !sat(g, tr, t)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Or(gs) => {
            for g in gs {
                if sat(g, tr, t)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Always(i, g) => {
            let (a, b) = i.steps(tr.dt())?;
            for k in a..=b {
                if !sat(g, tr, t + k)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Eventually(i, g) => {
            let (a, b) = i.steps(tr.dt())?;
            for k in a..=b {
                if sat(g, tr, t + k)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Until(i, lhs, rhs) => {
            let (a, b) = i.steps(tr.dt())?;
            // lhs must hold on every step from t up to the witness
            let mut prefix_ok = true;
            for j in 0..a {
                if !sat(lhs, tr, t + j)? {
                    prefix_ok = false;
                    break;
                }
            }
            let mut k = a;
            while prefix_ok && k <= b {
                if sat(rhs, tr, t + k)? {
                    return Ok(true);
                }
                if k < b {
                    prefix_ok = sat(lhs, tr, t + k)?;
                }
                k += 1;
            }
            false
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse_formula, Interval};

    fn trace_x(xs: &[f64], dt: f64) -> Trace {
        Trace::new(dt, [("x", xs.to_vec())]).unwrap()
    }

    #[test]
    fn channel_lookup() {
        let tr = trace_x(&[1.0, 2.0, 3.0], 1.0);
        assert_eq!(eval_signal(&SignalExpr::channel("x"), &tr, 1).unwrap(), 2.0);
        assert!(matches!(
            eval_signal(&SignalExpr::channel("y"), &tr, 1),
            Err(StlError::UnknownChannel(_))
        ));
        assert!(matches!(
            eval_signal(&SignalExpr::channel("x"), &tr, 3),
            Err(StlError::HorizonViolation { .. })
        ));
    }

    #[test]
    fn norm_of_constants() {
        let tr = trace_x(&[0.0], 1.0);
        let e = SignalExpr::EuclideanNorm(vec![SignalExpr::Const(3.0), SignalExpr::Const(4.0)]);
        assert_eq!(eval_signal(&e, &tr, 0).unwrap(), 5.0);
    }

    #[test]
    fn clamp_scale_midpoint_and_saturation() {
        let tr = trace_x(&[0.0], 1.0);
        let mid = SignalExpr::clamp_scale(SignalExpr::Const(5.0), 0.0, 10.0).unwrap();
        assert_eq!(eval_signal(&mid, &tr, 0).unwrap(), 0.0);
        let over = SignalExpr::clamp_scale(SignalExpr::Const(50.0), 0.0, 10.0).unwrap();
        assert_eq!(eval_signal(&over, &tr, 0).unwrap(), 1.0);
        let under = SignalExpr::clamp_scale(SignalExpr::Const(-5.0), 0.0, 10.0).unwrap();
        assert_eq!(eval_signal(&under, &tr, 0).unwrap(), -1.0);
    }

    #[test]
    fn true_is_always_satisfied() {
        let tr = trace_x(&[-7.0], 1.0);
        assert!(bool_sat(&Formula::True, &tr, 0).unwrap());
    }

    #[test]
    fn eventually_hits_late_step() {
        // the interval reaches step 5 but the trace ends at step 3
        let f = parse_formula("ev[0,5] (0.1 * x >= 0.3)").unwrap();
        let tr = trace_x(&[0.0, 1.0, 2.0, 3.5], 1.0);
        assert!(matches!(bool_sat(&f, &tr, 0), Err(StlError::HorizonViolation { .. })));
        let f = parse_formula("ev[0,3] (0.1 * x >= 0.3)").unwrap();
        assert!(bool_sat(&f, &tr, 0).unwrap());
    }

    #[test]
    fn always_fails_on_violating_step() {
        let f = parse_formula("alw[0,3] (x <= 1)").unwrap();
        let tr = trace_x(&[0.0, 0.0, 2.0, 0.0], 1.0);
        assert!(!bool_sat(&f, &tr, 0).unwrap());
    }

    #[test]
    fn until_requires_prefix() {
        let tr = Trace::new(1.0, [("a", vec![1.0, 1.0, -1.0, 1.0]), ("b", vec![-1.0, -1.0, -1.0, 1.0])])
            .unwrap();
        // a >= 0 until b >= 0: a fails at step 2 before b holds at step 3
        let f = parse_formula("(a >= 0) until[0,3] (b >= 0)").unwrap();
        assert!(!bool_sat(&f, &tr, 0).unwrap());
        // starting at step 3 the witness is immediate
        let f0 = parse_formula("(a >= 0) until[0,0] (b >= 0)").unwrap();
        assert!(bool_sat(&f0, &tr, 3).unwrap());
        let g = parse_formula("(b <= 0) until[0,3] (b >= 0)").unwrap();
        assert!(bool_sat(&g, &tr, 0).unwrap());
    }

    #[test]
    fn horizon_is_exact() {
        let f = parse_formula("ev[0,2] alw[1,2] (x <= 0)").unwrap();
        assert_eq!(required_horizon(&f, 1.0).unwrap(), 4);
        assert!(bool_sat(&f, &trace_x(&[0.0; 5], 1.0), 0).is_ok());
        assert!(bool_sat(&f, &trace_x(&[0.0; 4], 1.0), 0).is_err());

        let u = Formula::until(
            Interval::new(0.0, 2.0).unwrap(),
            parse_formula("alw[0,3] (x <= 0)").unwrap(),
            Formula::True,
        );
        assert_eq!(required_horizon(&u, 1.0).unwrap(), 4);
    }
}
