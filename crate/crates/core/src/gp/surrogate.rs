use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optimize::{self, Settings};
use super::{GpError, Kernel};

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;
/// Two normalized inputs closer than this are treated as the same point.
const DUPLICATE_TOL: f64 = 1e-12;
/// Negative variances within this multiple of σ² are round-off and clamp to 0.
const VARIANCE_CLAMP_TOL: f64 = 1e-8;

const LOG_VARIANCE_RANGE: (f64, f64) = (-9.210_340_371_976_182, 9.210_340_371_976_182); // 1e-4 ..= 1e4
const LOG_LENGTH_RANGE: (f64, f64) = (-6.907_755_278_982_137, 4.605_170_185_988_091); // 1e-3 ..= 1e2
const INIT_RANGE: (f64, f64) = (1e-2, 1e1);

/// Axis-aligned box used to normalize inputs onto `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GpError> {
        if lo.len() != hi.len() {
            return Err(GpError::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(GpError::InvalidTrainingSet(format!("degenerate bounds {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        Self { lo: vec![0.0; d], hi: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }
}

/// Training inputs (rows) with their observed outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self, GpError> {
        if x.len() != y.len() {
            return Err(GpError::InvalidTrainingSet(format!("{} inputs but {} outputs", x.len(), y.len())));
        }
        let d = x.first().map_or(0, Vec::len);
        if x.iter().any(|row| row.len() != d) {
            return Err(GpError::InvalidTrainingSet("rows differ in dimension".into()));
        }
        if x.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(GpError::InvalidTrainingSet("non-finite value".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of local ascents: the first starts at the supplied kernel, the
    /// rest at log-uniform random draws.
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 5, seed: 0, max_iters: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// A Gaussian process conditioned on a training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SurrogateSnapshot", into = "SurrogateSnapshot")]
pub struct Surrogate {
    kernel: Kernel,
    bounds: Bounds,
    train: TrainingSet,
    x_unit: Vec<Vec<f64>>,
    jitter: f64,
    /// Inverse of the lower Cholesky factor of `K + jitter I`.
    l_inv: DMatrix<f64>,
    /// `K⁻¹ y`
    alpha: DVector<f64>,
    /// diagonal of `K⁻¹`
    k_inv_diag: DVector<f64>,
    log_likelihood: f64,
}

/// Serialized form: everything needed to rebuild the factorization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateSnapshot {
    pub kernel: Kernel,
    pub bounds: Bounds,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub log_likelihood: f64,
}

impl From<Surrogate> for SurrogateSnapshot {
    fn from(s: Surrogate) -> Self {
        SurrogateSnapshot {
            kernel: s.kernel,
            bounds: s.bounds,
            x: s.train.x,
            y: s.train.y,
            log_likelihood: s.log_likelihood,
        }
    }
}

impl TryFrom<SurrogateSnapshot> for Surrogate {
    type Error = GpError;

    fn try_from(s: SurrogateSnapshot) -> Result<Self, GpError> {
        Surrogate::new(s.kernel, TrainingSet::new(s.x, s.y)?, s.bounds)
    }
}

impl Surrogate {
    /// Conditions the GP on `train` with fixed kernel hyperparameters.
    pub fn new(kernel: Kernel, train: TrainingSet, bounds: Bounds) -> Result<Self, GpError> {
        kernel.validate()?;
        if train.is_empty() {
            return Err(GpError::TooFewPoints { need: 1, got: 0 });
        }
        if train.dim() != bounds.dim() {
            return Err(GpError::DimensionMismatch { expected: bounds.dim(), got: train.dim() });
        }
        if let Some(d) = kernel.dim() {
            if d != bounds.dim() {
                return Err(GpError::DimensionMismatch { expected: bounds.dim(), got: d });
            }
        }
        let x_unit: Vec<Vec<f64>> = train.x.iter().map(|x| bounds.to_unit(x)).collect();
        check_duplicates(&x_unit)?;
        let y = DVector::from_column_slice(&train.y);
        let f = Factorized::new(&kernel, &x_unit, &y)?;
        let l_inv = f.l_inverse();
        let k_inv_diag = DVector::from_iterator(
            l_inv.ncols(),
            l_inv.column_iter().map(|c| c.norm_squared()),
        );
        Ok(Self {
            kernel,
            bounds,
            train,
            x_unit,
            jitter: f.jitter,
            l_inv,
            alpha: f.alpha,
            k_inv_diag,
            log_likelihood: f.log_likelihood,
        })
    }

    /// Maximizes the log marginal likelihood over the kernel hyperparameters
    /// and conditions on `train` at the best optimum found.
    pub fn fit(train: TrainingSet, bounds: Bounds, initial: &Kernel, opts: &FitOptions) -> Result<Self, GpError> {
        initial.validate()?;
        if train.len() < 2 {
            return Err(GpError::TooFewPoints { need: 2, got: train.len() });
        }
        if opts.restarts == 0 {
            return Err(GpError::InvalidKernel("at least one restart is required".into()));
        }
        if train.dim() != bounds.dim() {
            return Err(GpError::DimensionMismatch { expected: bounds.dim(), got: train.dim() });
        }
        let x_unit: Vec<Vec<f64>> = train.x.iter().map(|x| bounds.to_unit(x)).collect();
        check_duplicates(&x_unit)?;
        let objective = Likelihood::new(&x_unit, &train.y);

        let n_params = initial.n_params();
        let mut lower = vec![LOG_LENGTH_RANGE.0; n_params];
        let mut upper = vec![LOG_LENGTH_RANGE.1; n_params];
        lower[0] = LOG_VARIANCE_RANGE.0;
        upper[0] = LOG_VARIANCE_RANGE.1;

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (ln_lo, ln_hi) = (INIT_RANGE.0.ln(), INIT_RANGE.1.ln());
        let mut starts = vec![initial.log_params()];
        for _ in 1..opts.restarts {
            starts.push((0..n_params).map(|_| rng.gen_range(ln_lo..ln_hi)).collect());
        }

        let settings = Settings { max_iters: opts.max_iters, ..Settings::default() };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in &starts {
            let result = optimize::minimize(
                |p| {
                    objective
                        .value_and_grad(&initial.with_log_params(p))
                        .ok()
                        .map(|(ll, g)| (-ll, g.into_iter().map(|v| -v).collect()))
                },
                start,
                &lower,
                &upper,
                settings,
            );
            if let Some(m) = result {
                let ll = -m.f;
                // strictly better only: ties keep the earliest start
                if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                    best = Some((ll, m.x));
                }
            }
        }
        let (_, params) = best.ok_or(GpError::Factorization { jitter: JITTER_MAX })?;
        Surrogate::new(initial.with_log_params(&params), train, bounds)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.train
    }

    /// Training inputs in normalized coordinates.
    pub fn unit_inputs(&self) -> &[Vec<f64>] {
        &self.x_unit
    }

    /// Diagonal jitter actually added to the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn snapshot(&self) -> SurrogateSnapshot {
        self.clone().into()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, GpError> {
        Ok(self.predict_many(std::slice::from_ref(&x.to_vec()))?[0])
    }

    /// Posterior mean `k*ᵀ K⁻¹ y` and variance `k(x*, x*) - k*ᵀ K⁻¹ k*` at
    /// each query point.
    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>, GpError> {
        let d = self.dim();
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(GpError::DimensionMismatch { expected: d, got: bad.len() });
        }
        let n = self.len();
        let q_unit: Vec<Vec<f64>> = xs.iter().map(|x| self.bounds.to_unit(x)).collect();
        let k_star = DMatrix::from_fn(n, q_unit.len(), |i, j| self.kernel.eval_unchecked(&self.x_unit[i], &q_unit[j]));
        let v = &self.l_inv * &k_star;
        let means = k_star.tr_mul(&self.alpha);
        let prior = self.kernel.variance();
        let mut out = Vec::with_capacity(xs.len());
        for j in 0..xs.len() {
            let var = prior - v.column(j).norm_squared();
            let variance = if var >= 0.0 {
                var
            } else if -var <= VARIANCE_CLAMP_TOL * prior {
                0.0
            } else {
                return Err(GpError::NegativeVariance(var));
            };
            out.push(Prediction { mean: means[j], variance });
        }
        Ok(out)
    }

    /// Squared leave-one-out residuals with hyperparameters held fixed,
    /// via `y_i - f₋ᵢ(x_i) = (K⁻¹y)_i / (K⁻¹)_ii`.
    pub fn loo_squared_errors(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(self.k_inv_diag.iter())
            .map(|(a, d)| (a / d).powi(2))
            .collect()
    }
}

fn check_duplicates(x_unit: &[Vec<f64>]) -> Result<(), GpError> {
    for i in 0..x_unit.len() {
        for j in 0..i {
            let d2: f64 = x_unit[i].iter().zip(&x_unit[j]).map(|(a, b)| (a - b).powi(2)).sum();
            if d2.sqrt() < DUPLICATE_TOL {
                return Err(GpError::DuplicatePoint { first: j, second: i });
            }
        }
    }
    Ok(())
}

fn gram(kernel: &Kernel, x_unit: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x_unit.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.variance();
        for j in 0..i {
            let v = kernel.eval_unchecked(&x_unit[i], &x_unit[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `K + jitter I` with the escalation policy applied.
fn cholesky_with_jitter(mut k: DMatrix<f64>, variance: f64) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64), GpError> {
    let n = k.nrows();
    let mut rel = JITTER_START;
    let mut added = 0.0;
    loop {
        let jitter = rel * variance;
        for i in 0..n {
            k[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(c) = k.clone().cholesky() {
            return Ok((c, jitter));
        }
        if rel >= JITTER_MAX {
            return Err(GpError::Factorization { jitter });
        }
        rel *= 10.0;
    }
}

struct Factorized {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    jitter: f64,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

impl Factorized {
    fn new(kernel: &Kernel, x_unit: &[Vec<f64>], y: &DVector<f64>) -> Result<Self, GpError> {
        let (chol, jitter) = cholesky_with_jitter(gram(kernel, x_unit), kernel.variance())?;
        Ok(Self::from_cholesky(chol, jitter, y))
    }

    fn from_cholesky(chol: nalgebra::Cholesky<f64, nalgebra::Dyn>, jitter: f64, y: &DVector<f64>) -> Self {
        let alpha = chol.solve(y);
        let n = y.len() as f64;
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let log_likelihood =
            -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        Self { chol, jitter, alpha, log_likelihood }
    }

    fn l_inverse(&self) -> DMatrix<f64> {
        let n = self.alpha.len();
        let l = self.chol.l();
        l.solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Log marginal likelihood over a fixed set of normalized inputs.
struct Likelihood<'a> {
    x_unit: &'a [Vec<f64>],
    y: DVector<f64>,
    /// per-pair squared coordinate differences, pairs (i, j) with j < i in
    /// row-major order
    sq_diffs: Vec<f64>,
}

impl<'a> Likelihood<'a> {
    fn new(x_unit: &'a [Vec<f64>], y: &[f64]) -> Self {
        let d = x_unit.first().map_or(0, Vec::len);
        let n = x_unit.len();
        let mut sq_diffs = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for i in 0..n {
            for j in 0..i {
                sq_diffs.extend(x_unit[i].iter().zip(&x_unit[j]).map(|(a, b)| (a - b).powi(2)));
            }
        }
        Self { x_unit, y: DVector::from_column_slice(y), sq_diffs }
    }

    /// Log likelihood and its gradient in `[log σ², log ℓ...]`.
    fn value_and_grad(&self, kernel: &Kernel) -> Result<(f64, Vec<f64>), GpError> {
        let n = self.x_unit.len();
        let d = self.x_unit[0].len();
        let n_len = kernel.n_params() - 1;
        let mut k = DMatrix::zeros(n, n);
        // dK/dlog ℓ_p for the off-diagonal pairs, pair-major
        let mut dk = vec![0.0; n * n.saturating_sub(1) / 2 * n_len];
        let mut p = 0;
        for i in 0..n {
            k[(i, i)] = kernel.variance();
            for j in 0..i {
                let v = kernel.eval_with_length_grad(
                    &self.sq_diffs[p * d..(p + 1) * d],
                    &mut dk[p * n_len..(p + 1) * n_len],
                );
                k[(i, j)] = v;
                k[(j, i)] = v;
                p += 1;
            }
        }
        let (chol, jitter) = cholesky_with_jitter(k, kernel.variance())?;
        let f = Factorized::from_cholesky(chol, jitter, &self.y);
        let k_inv = f.chol.inverse();
        let alpha = &f.alpha;

        let mut grad = vec![0.0; 1 + n_len];
        // dK/dlog σ² = K (jitter scales with σ² too), so tr(W K) = yᵀα - n
        grad[0] = 0.5 * (self.y.dot(alpha) - n as f64);
        let mut p = 0;
        for i in 0..n {
            for j in 0..i {
                let w = alpha[i] * alpha[j] - k_inv[(i, j)];
                for (g, dkv) in grad[1..].iter_mut().zip(&dk[p * n_len..(p + 1) * n_len]) {
                    // symmetric pair counted twice, times the 1/2 in front
                    *g += w * dkv;
                }
                p += 1;
            }
        }
        Ok((f.log_likelihood, grad))
    }
}

/// Log marginal likelihood and gradient at `kernel`, exposed for checking
/// against finite differences.
#[cfg(test)]
pub(crate) fn log_likelihood_and_grad(
    kernel: &Kernel,
    train: &TrainingSet,
    bounds: &Bounds,
) -> Result<(f64, Vec<f64>), GpError> {
    let x_unit: Vec<Vec<f64>> = train.x.iter().map(|x| bounds.to_unit(x)).collect();
    Likelihood::new(&x_unit, &train.y).value_and_grad(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TrainingSet {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
        let y = x.iter().map(|r| (3.0 * r[0]).sin() + r.iter().sum::<f64>() * 0.3).collect();
        TrainingSet::new(x, y).unwrap()
    }

    #[test]
    fn single_point_by_hand() {
        let ts = TrainingSet::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let k = Kernel::squared_exponential(1.0, 1.0).unwrap();
        let s = Surrogate::new(k, ts, Bounds::unit(1)).unwrap();
        let p = s.predict(&[0.0]).unwrap();
        assert!((p.mean - 1.0).abs() < 1e-7);
        assert!(p.variance.abs() < 1e-7);
    }

    #[test]
    fn far_field_recovers_prior() {
        let ts = TrainingSet::new(vec![vec![0.1], vec![0.4]], vec![0.5, -0.3]).unwrap();
        let k = Kernel::matern52(0.7, vec![0.05]).unwrap();
        let s = Surrogate::new(k, ts, Bounds::unit(1)).unwrap();
        let p = s.predict(&[100.0]).unwrap();
        assert!(p.mean.abs() < 1e-12);
        assert!((p.variance - 0.7).abs() < 1e-12);
    }

    #[test]
    fn interpolates_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts = random_set(&mut rng, 20, 2);
        let s = Surrogate::new(Kernel::default_for(2), ts.clone(), Bounds::unit(2)).unwrap();
        let preds = s.predict_many(ts.x()).unwrap();
        for (p, y) in preds.iter().zip(ts.y()) {
            assert!((p.mean - y).abs() < 1e-5);
            assert!(p.variance <= 1e-6);
        }
    }

    #[test]
    fn zero_targets_predict_zero() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let ts = TrainingSet::new(x, vec![0.0; 3]).unwrap();
        let s = Surrogate::fit(ts, Bounds::unit(1), &Kernel::default_for(1), &FitOptions::default()).unwrap();
        for q in [0.0, 0.3, 0.77] {
            assert_eq!(s.predict(&[q]).unwrap().mean, 0.0);
        }
    }

    #[test]
    fn duplicates_rejected() {
        let ts = TrainingSet::new(vec![vec![0.2], vec![0.2]], vec![0.0, 1.0]).unwrap();
        let err = Surrogate::new(Kernel::default_for(1), ts, Bounds::unit(1)).unwrap_err();
        assert_eq!(err, GpError::DuplicatePoint { first: 0, second: 1 });
    }

    #[test]
    fn normalization_uses_bounds() {
        let ts = TrainingSet::new(vec![vec![20.0], vec![70.0]], vec![0.3, -0.3]).unwrap();
        let bounds = Bounds::new(vec![20.0], vec![70.0]).unwrap();
        let s = Surrogate::new(Kernel::default_for(1), ts, bounds).unwrap();
        assert_eq!(s.unit_inputs(), &[vec![0.0], vec![1.0]]);
    }

    #[test]
    fn fit_improves_on_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ts = random_set(&mut rng, 25, 2);
        let k0 = Kernel::matern52(3.0, vec![1.0, 1.0]).unwrap();
        let start = Surrogate::new(k0.clone(), ts.clone(), Bounds::unit(2)).unwrap();
        let opts = FitOptions { restarts: 3, seed: 11, max_iters: 100 };
        let fitted = Surrogate::fit(ts, Bounds::unit(2), &k0, &opts).unwrap();
        assert!(fitted.log_likelihood() >= start.log_likelihood());
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts = random_set(&mut rng, 15, 2);
        let bounds = Bounds::unit(2);
        for trial in 0..20 {
            let kernel = if trial % 2 == 0 {
                Kernel::matern52(rng.gen_range(0.2..3.0), vec![rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)])
            } else {
                Kernel::squared_exponential(rng.gen_range(0.2..3.0), rng.gen_range(0.01..0.5))
            }
            .unwrap();
            let (_, grad) = log_likelihood_and_grad(&kernel, &ts, &bounds).unwrap();
            let p = kernel.log_params();
            for j in 0..p.len() {
                let h = 1e-5;
                let mut up = p.clone();
                up[j] += h;
                let mut dn = p.clone();
                dn[j] -= h;
                let fu = log_likelihood_and_grad(&kernel.with_log_params(&up), &ts, &bounds).unwrap().0;
                let fd = log_likelihood_and_grad(&kernel.with_log_params(&dn), &ts, &bounds).unwrap().0;
                let fdiff = (fu - fd) / (2.0 * h);
                let rel = (fdiff - grad[j]).abs() / grad[j].abs().max(1.0);
                assert!(rel < 1e-5, "trial {trial} param {j}: fd {fdiff} vs analytic {}", grad[j]);
            }
        }
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ts = random_set(&mut rng, 12, 3);
        let s = Surrogate::new(Kernel::default_for(3), ts, Bounds::unit(3)).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Surrogate = serde_json::from_str(&json).unwrap();
        let q = vec![vec![0.3, 0.2, 0.9], vec![0.5, 0.5, 0.5]];
        assert_eq!(s.predict_many(&q).unwrap(), back.predict_many(&q).unwrap());
    }
}
