//! Box-constrained limited-memory quasi-Newton minimisation.

use std::collections::VecDeque;

const MEMORY: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub f_tol: f64,
    /// Stop when the projected gradient infinity-norm falls below this.
    pub g_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self { max_iters: 100, f_tol: 1e-10, g_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
}

/// Minimises `objective` over the box `[lower, upper]`.
///
/// `objective` returns `None` where it is undefined; such points are
/// rejected by the line search. Returns `None` only if the start point is
/// itself undefined.
pub fn minimize<F>(
    mut objective: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    settings: Settings,
) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut f, mut g) = objective(&x)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);

    let mut iters = 0;
    while iters < settings.max_iters {
        iters += 1;

        // variables pinned at a bound with the gradient pushing outward
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let pg_norm = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm < settings.g_tol {
            break;
        }

        let mut d = two_loop(&g, &history);
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            history.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        }

        let mut step = if history.is_empty() { (1.0 / pg_norm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial);
            if let Some((ft, gt)) = objective(&trial) {
                let decrease: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if ft.is_finite() && ft <= f && ft <= f + 1e-4 * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else { break };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let rel = (f - f_new).abs() / f.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        if rel < settings.f_tol {
            break;
        }
    }
    Some(Minimum { x, f, iters })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.iter().zip(&q).map(|(si, qi)| si * qi).sum::<f64>();
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let gamma = sy / yy;
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.iter().zip(&q).map(|(yi, qi)| yi * qi).sum::<f64>();
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
