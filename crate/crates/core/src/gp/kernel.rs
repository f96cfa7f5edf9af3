use serde::{Deserialize, Serialize};

use super::GpError;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Stationary covariance functions over normalized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `σ² exp(-|x - x'|² / (2ℓ))`. Note the denominator is `2ℓ`, not `2ℓ²`.
    SquaredExponential { variance: f64, length_scale: f64 },
    /// Matérn ν = 5/2 with one length-scale per input dimension.
    Matern52 { variance: f64, length_scales: Vec<f64> },
}

impl Kernel {
    pub fn squared_exponential(variance: f64, length_scale: f64) -> Result<Self, GpError> {
        let k = Kernel::SquaredExponential { variance, length_scale };
        k.validate()?;
        Ok(k)
    }

    pub fn matern52(variance: f64, length_scales: Vec<f64>) -> Result<Self, GpError> {
        let k = Kernel::Matern52 { variance, length_scales };
        k.validate()?;
        Ok(k)
    }

    /// The default prior over `d` normalized inputs.
    pub fn default_for(d: usize) -> Self {
        Kernel::Matern52 { variance: 1.0, length_scales: vec![0.2; d] }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let valid = match self {
            Kernel::SquaredExponential { variance, length_scale } => ok(*variance) && ok(*length_scale),
            Kernel::Matern52 { variance, length_scales } => {
                ok(*variance) && !length_scales.is_empty() && length_scales.iter().all(|&l| ok(l))
            }
        };
        if valid {
            Ok(())
        } else {
            Err(GpError::InvalidKernel(format!("{self:?}")))
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Kernel::SquaredExponential { variance, .. } | Kernel::Matern52 { variance, .. } => *variance,
        }
    }

    /// Input dimension the kernel is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Kernel::SquaredExponential { .. } => None,
            Kernel::Matern52 { length_scales, .. } => Some(length_scales.len()),
        }
    }

    /// Checked evaluation `k(x, x')`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, GpError> {
        if x.len() != y.len() {
            return Err(GpError::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(GpError::DimensionMismatch { expected: d, got: x.len() });
            }
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::SquaredExponential { variance, length_scale } => {
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                variance * (-r2 / (2.0 * length_scale)).exp()
            }
            Kernel::Matern52 { variance, length_scales } => {
                let r2: f64 = x
                    .iter()
                    .zip(y)
                    .zip(length_scales)
                    .map(|((a, b), l)| ((a - b) / l).powi(2))
                    .sum();
                let s = SQRT5 * r2.sqrt();
                variance * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Number of hyperparameters, `[log σ², log ℓ...]`.
    pub fn n_params(&self) -> usize {
        match self {
            Kernel::SquaredExponential { .. } => 2,
            Kernel::Matern52 { length_scales, .. } => 1 + length_scales.len(),
        }
    }

    pub fn log_params(&self) -> Vec<f64> {
        match self {
            Kernel::SquaredExponential { variance, length_scale } => vec![variance.ln(), length_scale.ln()],
            Kernel::Matern52 { variance, length_scales } => std::iter::once(variance.ln())
                .chain(length_scales.iter().map(|l| l.ln()))
                .collect(),
        }
    }

    pub fn with_log_params(&self, p: &[f64]) -> Self {
        debug_assert_eq!(p.len(), self.n_params());
        match self {
            Kernel::SquaredExponential { .. } => {
                Kernel::SquaredExponential { variance: p[0].exp(), length_scale: p[1].exp() }
            }
            Kernel::Matern52 { .. } => Kernel::Matern52 {
                variance: p[0].exp(),
                length_scales: p[1..].iter().map(|v| v.exp()).collect(),
            },
        }
    }

    /// Value and gradient with respect to the log length-scales, given the
    /// per-dimension squared differences of a pair of inputs. The variance
    /// derivative is not included: `∂k/∂log σ² = k`.
    pub(crate) fn eval_with_length_grad(&self, sq_diff: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Kernel::SquaredExponential { variance, length_scale } => {
                let r2: f64 = sq_diff.iter().sum();
                let k = variance * (-r2 / (2.0 * length_scale)).exp();
                grad[0] = k * r2 / (2.0 * length_scale);
                k
            }
            Kernel::Matern52 { variance, length_scales } => {
                let mut r2 = 0.0;
                for (d2, l) in sq_diff.iter().zip(length_scales) {
                    r2 += d2 / (l * l);
                }
                let s = SQRT5 * r2.sqrt();
                let e = (-s).exp();
                let common = variance * e * (1.0 + s) * 5.0 / 3.0;
                for ((g, d2), l) in grad.iter_mut().zip(sq_diff).zip(length_scales) {
                    *g = common * d2 / (l * l);
                }
                variance * (1.0 + s + s * s / 3.0) * e
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_gives_variance() {
        let k = Kernel::squared_exponential(2.5, 0.3).unwrap();
        assert_eq!(k.eval(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 2.5);
        let m = Kernel::matern52(1.7, vec![0.3, 0.1]).unwrap();
        assert_eq!(m.eval(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 1.7);
    }

    #[test]
    fn se_uses_two_ell_denominator() {
        let k = Kernel::squared_exponential(1.0, 0.5).unwrap();
        let v = k.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367_879).abs() < 1e-6);
    }

    #[test]
    fn matern_known_value() {
        // r = 1: (1 + √5 + 5/3) e^{-√5}
        let m = Kernel::matern52(1.0, vec![1.0]).unwrap();
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        assert!((m.eval(&[0.0], &[1.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let k = Kernel::squared_exponential(1.0, 1.0).unwrap();
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(GpError::DimensionMismatch { .. })));
        let m = Kernel::matern52(1.0, vec![1.0]).unwrap();
        assert!(m.eval(&[0.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(Kernel::squared_exponential(0.0, 1.0).is_err());
        assert!(Kernel::matern52(1.0, vec![]).is_err());
        assert!(Kernel::matern52(1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn length_gradient_matches_finite_difference() {
        let diffs = [0.04, 0.09];
        for k in [
            Kernel::squared_exponential(1.3, 0.2).unwrap(),
            Kernel::matern52(0.8, vec![0.3, 0.5]).unwrap(),
        ] {
            let n_len = k.n_params() - 1;
            let mut grad = vec![0.0; n_len];
            k.eval_with_length_grad(&diffs, &mut grad);
            let p = k.log_params();
            for j in 0..n_len {
                let h = 1e-6;
                let mut up = p.clone();
                up[1 + j] += h;
                let mut dn = p.clone();
                dn[1 + j] -= h;
                let mut scratch = vec![0.0; n_len];
                let fu = k.with_log_params(&up).eval_with_length_grad(&diffs, &mut scratch);
                let fd = k.with_log_params(&dn).eval_with_length_grad(&diffs, &mut scratch);
                let fdiff = (fu - fd) / (2.0 * h);
                assert!((fdiff - grad[j]).abs() < 1e-8, "{k:?} {j}: {fdiff} vs {}", grad[j]);
            }
        }
    }
}
