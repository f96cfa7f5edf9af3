//! Adaptive experiment design: the expected-prediction-error acquisition
//! and the campaign loop built on it.
//!
//! Each candidate `x` is scored by
//! `EPE(x) = α·e²_CV(x) + (1 − α)·s²(x)`, where `s²` is the surrogate's
//! predictive variance and `e²_CV(x)` is the leave-one-out error of the
//! training point nearest to `x`. The balance `α` tracks how well the
//! cross-validation error predicted the true error at the previous choice.

mod campaign;

pub use campaign::{
    run_campaign, CampaignConfig, CampaignError, CampaignRecord, Checkpoint, Evaluation, Phase, Strategy,
};

use serde::{Deserialize, Serialize};

use crate::gp::{GpError, Surrogate};

/// Upper limit on `α`, keeping some weight on exploration.
pub const ALPHA_MAX: f64 = 0.99;
/// `α` before any adaptive evaluation has been observed.
pub const ALPHA_INIT: f64 = 0.5;

/// How the observed residual enters the `α` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `(y − ŷ)² / e²_CV`: squared residual against a squared error.
    #[default]
    Squared,
    /// `|y − ŷ| / e²_CV`, the residual taken unsquared.
    Unsquared,
}

/// `0.99 · min(1, ½ · r / e²_CV)` with `r` the (squared) residual at the
/// previous choice. A zero CV error saturates the ratio.
pub fn update_alpha(y_prev: f64, yhat_prev: f64, ecv_prev: f64, rule: AlphaRule) -> f64 {
    let resid = match rule {
        AlphaRule::Squared => (y_prev - yhat_prev).powi(2),
        AlphaRule::Unsquared => (y_prev - yhat_prev).abs(),
    };
    let ratio = if ecv_prev > 0.0 { 0.5 * resid / ecv_prev } else { f64::INFINITY };
    let alpha = ALPHA_MAX * ratio.min(1.0);
    if alpha.is_nan() {
        ALPHA_MAX
    } else {
        alpha.clamp(0.0, ALPHA_MAX)
    }
}

/// A fitted surrogate with its cross-validation errors and balance factor.
#[derive(Debug, Clone)]
pub struct AcquisitionState {
    surrogate: Surrogate,
    cv_errors: Vec<f64>,
    alpha: f64,
}

impl AcquisitionState {
    pub fn new(surrogate: Surrogate, alpha: f64) -> Self {
        let cv_errors = surrogate.loo_squared_errors();
        Self { surrogate, cv_errors, alpha: alpha.clamp(0.0, ALPHA_MAX) }
    }

    pub fn surrogate(&self) -> &Surrogate {
        &self.surrogate
    }

    pub fn cv_errors(&self) -> &[f64] {
        &self.cv_errors
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Index of the training point nearest to `x` in normalized coordinates;
    /// ties go to the lowest index.
    pub fn nearest_training_point(&self, x: &[f64]) -> usize {
        let u = self.surrogate.bounds().to_unit(x);
        nearest(self.surrogate.unit_inputs(), &u)
    }

    pub fn cv_error_at(&self, x: &[f64]) -> f64 {
        self.cv_errors[self.nearest_training_point(x)]
    }

    pub fn epe(&self, x: &[f64]) -> Result<f64, GpError> {
        let s2 = self.surrogate.predict(x)?.variance;
        Ok(epe_value(self.alpha, self.cv_error_at(x), s2))
    }

    /// EPE at every candidate, in candidate order.
    pub fn epe_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, GpError> {
        let preds = self.surrogate.predict_many(xs)?;
        Ok(xs
            .iter()
            .zip(preds)
            .map(|(x, p)| epe_value(self.alpha, self.cv_error_at(x), p.variance))
            .collect())
    }
}

pub fn epe_value(alpha: f64, ecv: f64, variance: f64) -> f64 {
    alpha * ecv + (1.0 - alpha) * variance
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum()
}

pub(crate) fn nearest(points: &[Vec<f64>], u: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let d = sq_dist(p, u);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Index of the largest value, the lowest index among equals. NaN never wins.
pub(crate) fn argmax_first<I: IntoIterator<Item = (usize, f64)>>(values: I) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}
