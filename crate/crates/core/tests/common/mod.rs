#![allow(dead_code)]

use adaptest::gp::{Bounds, Kernel, TrainingSet};
use adaptest::stl::{required_horizon, Formula, Interval, SignalExpr, Trace};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DT: f64 = 0.1;
pub const CHANNELS: [&str; 3] = ["a", "b", "c"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Short-decimal value so formulas survive a print/parse round trip.
fn tidy(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo..hi) * 100.0).round() / 100.0
}

pub fn random_signal(rng: &mut ChaCha8Rng, depth: u32) -> SignalExpr {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return if rng.gen_bool(0.8) {
            SignalExpr::channel(*CHANNELS.choose(rng).unwrap())
        } else {
            SignalExpr::Const(tidy(rng, -2.0, 2.0))
        };
    }
    let sub = |rng: &mut ChaCha8Rng| Box::new(random_signal(rng, depth - 1));
    match rng.gen_range(0..5) {
        0 => SignalExpr::Negate(sub(rng)),
        1 => SignalExpr::Sum(sub(rng), sub(rng)),
        2 => SignalExpr::Difference(sub(rng), sub(rng)),
        3 => SignalExpr::Scale(tidy(rng, -2.0, 2.0), sub(rng)),
        _ => SignalExpr::EuclideanNorm((0..rng.gen_range(1..=3)).map(|_| random_signal(rng, depth - 1)).collect()),
    }
}

/// A predicate on a clamped expression, so that `h` stays in `[-1, 1]`.
pub fn random_predicate(rng: &mut ChaCha8Rng) -> Formula {
    let lower = tidy(rng, -3.0, 0.0);
    let upper = lower + 0.5 + tidy(rng, 0.0, 3.0);
    let h = SignalExpr::clamp_scale(random_signal(rng, 2), lower, upper).unwrap();
    Formula::predicate(h, tidy(rng, -1.0, 1.0)).unwrap()
}

fn random_interval(rng: &mut ChaCha8Rng) -> Interval {
    let lo = rng.gen_range(0..3) as f64 * DT;
    let hi = lo + rng.gen_range(0..4) as f64 * DT;
    Interval::new(lo, hi).unwrap()
}

pub fn random_formula(rng: &mut ChaCha8Rng, depth: u32) -> Formula {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.05) { Formula::True } else { random_predicate(rng) };
    }
    let sub = |rng: &mut ChaCha8Rng| random_formula(rng, depth - 1);
    match rng.gen_range(0..6) {
        0 => Formula::not(sub(rng)),
        1 => Formula::and((0..rng.gen_range(2..=3)).map(|_| sub(rng)).collect()).unwrap(),
        2 => Formula::or((0..rng.gen_range(2..=3)).map(|_| sub(rng)).collect()).unwrap(),
        3 => Formula::always(random_interval(rng), sub(rng)),
        4 => Formula::eventually(random_interval(rng), sub(rng)),
        _ => {
            let (a, b) = (sub(rng), sub(rng));
            Formula::until(random_interval(rng), a, b)
        }
    }
}

/// A trace long enough for `f`, with a few extra samples.
pub fn random_trace_for(rng: &mut ChaCha8Rng, f: &Formula) -> Trace {
    let len = required_horizon(f, DT).unwrap() + 1 + rng.gen_range(0..4);
    random_trace(rng, len)
}

pub fn random_trace(rng: &mut ChaCha8Rng, len: usize) -> Trace {
    Trace::new(
        DT,
        CHANNELS.iter().map(|c| (c.to_string(), (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>())),
    )
    .unwrap()
}

/// Random inputs at least 0.01 apart in the unit cube with smooth targets.
pub fn random_training_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TrainingSet {
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n);
    while x.len() < n {
        let p: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let far = x.iter().all(|q| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() > 1e-4);
        if far {
            x.push(p);
        }
    }
    let y = x.iter().map(|p| (3.0 * p[0]).sin() * 0.5 + p.iter().sum::<f64>() * 0.2 - 0.3).collect();
    TrainingSet::new(x, y).unwrap()
}

pub fn random_kernel(rng: &mut ChaCha8Rng, d: usize) -> Kernel {
    let variance = rng.gen_range(0.2..2.0);
    if rng.gen_bool(0.5) {
        // the squared-exponential scale divides a squared distance
        Kernel::squared_exponential(variance, rng.gen_range(0.002..0.03)).unwrap()
    } else {
        Kernel::matern52(variance, (0..d).map(|_| rng.gen_range(0.05..0.3)).collect()).unwrap()
    }
}

/// Random box bounds around the unit cube, to exercise normalization.
pub fn random_bounds(rng: &mut ChaCha8Rng, d: usize) -> (Bounds, Vec<f64>, Vec<f64>) {
    let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let width: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..10.0)).collect();
    let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
    (Bounds::new(lo.clone(), hi).unwrap(), lo, width)
}

/// Kernel value written out from the textbook formulas.
pub fn oracle_kernel(k: &Kernel, u: &[f64], v: &[f64]) -> f64 {
    match k {
        Kernel::SquaredExponential { variance, length_scale } => {
            let r2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            variance * (-r2 / (2.0 * length_scale)).exp()
        }
        Kernel::Matern52 { variance, length_scales } => {
            let r = u.iter().zip(v).zip(length_scales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum::<f64>().sqrt();
            let s = 5f64.sqrt() * r;
            variance * (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
        }
    }
}

/// Posterior mean and variance from an explicitly inverted Gram matrix.
/// Near-singular Gram matrices make a bare inverse lose digits in the
/// variance, so each solve gets two steps of iterative refinement.
pub fn oracle_predict(k: &Kernel, jitter: f64, xu: &[Vec<f64>], y: &[f64], q: &[f64]) -> (f64, f64) {
    let n = xu.len();
    let gram = nalgebra::DMatrix::from_fn(n, n, |i, j| oracle_kernel(k, &xu[i], &xu[j]) + if i == j { jitter } else { 0.0 });
    let inv = gram.clone().try_inverse().expect("Gram matrix is invertible");
    let solve = |b: &nalgebra::DVector<f64>| {
        let mut sol = &inv * b;
        for _ in 0..2 {
            let residual = b - &gram * &sol;
            sol += &inv * residual;
        }
        sol
    };
    let ks = nalgebra::DVector::from_fn(n, |i, _| oracle_kernel(k, &xu[i], q));
    let mean = ks.dot(&solve(&nalgebra::DVector::from_column_slice(y)));
    let var = oracle_kernel(k, q, q) - ks.dot(&solve(&ks));
    (mean, var)
}

/// Replays the acquisition of a `mepe` record from scratch and checks that
/// every adaptive point attains the maximum EPE over the candidates still
/// available at that iteration. Returns the number of iterations checked.
pub fn recheck_epe(rec: &adaptest::acquisition::CampaignRecord) -> Result<usize, String> {
    use adaptest::acquisition::Phase;
    use adaptest::gp::Surrogate;

    let pool = rec.config.candidate_pool(&rec.domain).map_err(|e| e.to_string())?.points;
    let bounds = rec.surrogate.bounds.clone();
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    let pool_unit: Vec<Vec<f64>> = pool.iter().map(|x| bounds.to_unit(x)).collect();
    let init: Vec<Vec<f64>> =
        rec.evaluations.iter().filter(|e| e.phase == Phase::Init).map(|e| bounds.to_unit(&e.x)).collect();
    let mut available: Vec<bool> = pool_unit.iter().map(|p| init.iter().all(|q| d2(p, q) >= 1e-24)).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for e in rec.evaluations.iter().filter(|e| e.phase == Phase::Init) {
        if let Some(y) = e.y {
            xs.push(e.x.clone());
            ys.push(y);
        }
    }
    let mut checked = 0;
    for (it, e) in rec.evaluations.iter().filter(|e| e.phase == Phase::Adaptive).enumerate() {
        let (kernel, alpha, chosen) = (e.kernel.clone().unwrap(), e.alpha.unwrap(), e.pool_index.unwrap());
        if pool[chosen] != e.x {
            return Err(format!("iteration {it}: point is not pool entry {chosen}"));
        }
        let s = Surrogate::new(kernel, TrainingSet::new(xs.clone(), ys.clone()).unwrap(), bounds.clone())
            .map_err(|e| e.to_string())?;
        let cv = s.loo_squared_errors();
        let train_unit: Vec<Vec<f64>> = xs.iter().map(|x| bounds.to_unit(x)).collect();
        let (mut best, mut best_j) = (f64::NEG_INFINITY, usize::MAX);
        let mut chosen_epe = f64::NAN;
        for j in (0..pool.len()).filter(|&j| available[j]) {
            let mut nn = 0;
            for (i, t) in train_unit.iter().enumerate() {
                if d2(&pool_unit[j], t) < d2(&pool_unit[j], &train_unit[nn]) {
                    nn = i;
                }
            }
            let var = s.predict(&pool[j]).unwrap().variance;
            let epe = alpha * cv[nn] + (1.0 - alpha) * var;
            if j == chosen {
                chosen_epe = epe;
            }
            if epe > best {
                (best, best_j) = (epe, j);
            }
        }
        let tol = 1e-9 * best.abs().max(1e-12);
        if !(chosen_epe >= best - tol) {
            return Err(format!("iteration {it}: chose {chosen} with EPE {chosen_epe}, pool max {best} at {best_j}"));
        }
        if (e.epe.unwrap() - chosen_epe).abs() > tol {
            return Err(format!("iteration {it}: recorded EPE {} but recomputed {chosen_epe}", e.epe.unwrap()));
        }
        available[chosen] = false;
        if let Some(y) = e.y {
            xs.push(e.x.clone());
            ys.push(y);
        }
        checked += 1;
    }
    Ok(checked)
}
