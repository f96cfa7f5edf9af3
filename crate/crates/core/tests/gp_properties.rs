mod common;

use adaptest::gp::{Bounds, FitOptions, Kernel, Surrogate, TrainingSet};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn scaled(ts: &TrainingSet, lo: &[f64], width: &[f64]) -> TrainingSet {
    let x = ts.x().iter().map(|p| p.iter().zip(lo).zip(width).map(|((u, l), w)| l + w * u).collect()).collect();
    TrainingSet::new(x, ts.y().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_match_explicit_inverse(seed in any::<u64>(), n in 1usize..=30, d in 1usize..=3) {
        let mut r = rng(seed);
        let ts = random_training_set(&mut r, n, d);
        let k = random_kernel(&mut r, d);
        let (bounds, lo, width) = random_bounds(&mut r, d);
        let s = Surrogate::new(k.clone(), scaled(&ts, &lo, &width), bounds).unwrap();
        for _ in 0..5 {
            let u: Vec<f64> = (0..d).map(|_| r.gen::<f64>()).collect();
            let x: Vec<f64> = u.iter().zip(&lo).zip(&width).map(|((u, l), w)| l + w * u).collect();
            let p = s.predict(&x).unwrap();
            let (m, v) = oracle_predict(&k, s.jitter(), ts.x(), ts.y(), &u);
            prop_assert!((p.mean - m).abs() < 1e-8, "mean {} vs {}", p.mean, m);
            prop_assert!((p.variance - v.max(0.0)).abs() < 1e-8, "variance {} vs {}", p.variance, v);
            prop_assert!(p.variance >= 0.0);
        }
    }

    #[test]
    fn loo_matches_drop_one_refits(seed in any::<u64>(), n in 2usize..=20, d in 1usize..=3) {
        let mut r = rng(seed);
        let ts = random_training_set(&mut r, n, d);
        let k = random_kernel(&mut r, d);
        let s = Surrogate::new(k.clone(), ts.clone(), Bounds::unit(d)).unwrap();
        let loo = s.loo_squared_errors();
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let sub = TrainingSet::new(
                keep.iter().map(|&j| ts.x()[j].clone()).collect(),
                keep.iter().map(|&j| ts.y()[j]).collect(),
            ).unwrap();
            let si = Surrogate::new(k.clone(), sub, Bounds::unit(d)).unwrap();
            prop_assert_eq!(si.jitter(), s.jitter());
            let naive = (ts.y()[i] - si.predict(&ts.x()[i]).unwrap().mean).powi(2);
            prop_assert!((loo[i] - naive).abs() < 1e-8, "point {}: {} vs {}", i, loo[i], naive);
        }
    }

    #[test]
    fn batch_and_single_predictions_agree(seed in any::<u64>(), n in 1usize..=15) {
        let mut r = rng(seed);
        let ts = random_training_set(&mut r, n, 2);
        let s = Surrogate::new(random_kernel(&mut r, 2), ts, Bounds::unit(2)).unwrap();
        let qs: Vec<Vec<f64>> = (0..7).map(|_| vec![r.gen(), r.gen()]).collect();
        let batch = s.predict_many(&qs).unwrap();
        for (q, b) in qs.iter().zip(batch) {
            let p = s.predict(q).unwrap();
            prop_assert!((p.mean - b.mean).abs() < 1e-12 && (p.variance - b.variance).abs() < 1e-12);
        }
    }
}

#[test]
fn fit_never_lowers_likelihood_of_the_initial_kernel() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let ts = random_training_set(&mut r, 25, 2);
        let k0 = Kernel::default_for(2);
        let fixed = Surrogate::new(k0.clone(), ts.clone(), Bounds::unit(2)).unwrap();
        let fitted = Surrogate::fit(ts, Bounds::unit(2), &k0, &FitOptions { restarts: 3, seed, max_iters: 100 }).unwrap();
        assert!(fitted.log_likelihood() >= fixed.log_likelihood() - 1e-9);
    }
}

#[test]
fn snapshot_round_trip_predicts_identically() {
    let mut r = rng(5);
    let ts = random_training_set(&mut r, 12, 3);
    let s = Surrogate::new(random_kernel(&mut r, 3), ts, Bounds::unit(3)).unwrap();
    let json = serde_json::to_string(&s.snapshot()).unwrap();
    let back = Surrogate::try_from(serde_json::from_str::<adaptest::gp::SurrogateSnapshot>(&json).unwrap()).unwrap();
    let q = [0.3, 0.6, 0.1];
    assert_eq!(s.predict(&q).unwrap(), back.predict(&q).unwrap());
}
