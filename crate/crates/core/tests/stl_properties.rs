mod common;

use adaptest::robustness::{agm_and, agm_or, agm_rob};
use adaptest::stl::{bool_sat, parse_formula, Formula, Interval};
use common::*;
use proptest::prelude::*;

fn rob(f: &Formula, tr: &adaptest::stl::Trace) -> f64 {
    agm_rob(f, tr, 0).unwrap().value()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn printed_formula_parses_back(seed in any::<u64>()) {
        let f = random_formula(&mut rng(seed), 3);
        let text = f.to_string();
        prop_assert_eq!(parse_formula(&text).unwrap(), f, "{}", text);
    }

    #[test]
    fn sign_agrees_with_boolean_semantics(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_formula(&mut r, 3);
        let tr = random_trace_for(&mut r, &f);
        let eta = rob(&f, &tr);
        prop_assert!((-1.0..=1.0).contains(&eta));
        if eta.abs() > 1e-9 {
            prop_assert_eq!(eta > 0.0, bool_sat(&f, &tr, 0).unwrap(), "{} gave {}", f, eta);
        }
    }

    #[test]
    fn negation_flips_sign(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_formula(&mut r, 3);
        let tr = random_trace_for(&mut r, &f);
        prop_assert_eq!(rob(&Formula::not(f.clone()), &tr), -rob(&f, &tr));
    }

    #[test]
    fn de_morgan(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_formula(&mut r, 2), random_formula(&mut r, 2));
        let lhs = Formula::not(Formula::and(vec![a.clone(), b.clone()]).unwrap());
        let rhs = Formula::or(vec![Formula::not(a), Formula::not(b)]).unwrap();
        let tr = random_trace_for(&mut r, &lhs);
        prop_assert!((rob(&lhs, &tr) - rob(&rhs, &tr)).abs() < 1e-12);
    }

    #[test]
    fn eventually_is_dual_of_always(seed in any::<u64>(), lo in 0usize..3, w in 0usize..4) {
        let mut r = rng(seed);
        let phi = random_formula(&mut r, 2);
        let i = Interval::new(lo as f64 * DT, (lo + w) as f64 * DT).unwrap();
        let ev = Formula::eventually(i, phi.clone());
        let alw = Formula::not(Formula::always(i, Formula::not(phi)));
        let tr = random_trace_for(&mut r, &ev);
        prop_assert!((rob(&ev, &tr) - rob(&alw, &tr)).abs() < 1e-12);
    }

    #[test]
    fn conjunction_is_commutative_and_bounded(vals in proptest::collection::vec(-1.0f64..=1.0, 2..6)) {
        let a = agm_and(&vals);
        let mut rev = vals.clone();
        rev.reverse();
        prop_assert!((a - agm_and(&rev)).abs() < 1e-12);
        let neg: Vec<f64> = vals.iter().map(|v| -v).collect();
        prop_assert!((agm_or(&vals) + agm_and(&neg)).abs() < 1e-12);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a >= min - 1e-12 && a <= max + 1e-12);
    }
}
