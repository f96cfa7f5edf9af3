use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DesignError;

/// Membership slack, relative to the coordinate's bounding-box width.
const MEMBERSHIP_TOL: f64 = 1e-9;

/// `offset + Σ coef[k]·x[k]` over the preceding coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub coef: Vec<f64>,
}

impl Affine {
    pub fn constant(offset: f64) -> Self {
        Self { offset, coef: Vec::new() }
    }

    fn eval(&self, prev: &[f64]) -> f64 {
        self.offset + self.coef.iter().zip(prev).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Range over the box `prev_lo..prev_hi`.
    fn range(&self, prev_lo: &[f64], prev_hi: &[f64]) -> (f64, f64) {
        let mut lo = self.offset;
        let mut hi = self.offset;
        for (c, (a, b)) in self.coef.iter().zip(prev_lo.iter().zip(prev_hi)) {
            lo += (c * a).min(c * b);
            hi += (c * a).max(c * b);
        }
        (lo, hi)
    }
}

/// Conditional distribution of one coordinate given the earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
    /// Density linear in x, proportional to `w0` at `lo` and `w1` at `hi`.
    Ramp { lo: f64, hi: f64, w0: f64, w1: f64 },
    /// Uniform between two affine functions of the preceding coordinates.
    Linear { lower: Affine, upper: Affine },
}

impl Distribution {
    fn validate(&self, index: usize) -> Result<(), String> {
        let finite = |vs: &[f64]| vs.iter().all(|v| v.is_finite());
        match self {
            Distribution::Uniform { lo, hi } => {
                if !(finite(&[*lo, *hi]) && lo < hi) {
                    return Err(format!("uniform needs lo < hi, got [{lo}, {hi}]"));
                }
            }
            Distribution::Triangular { lo, mode, hi } => {
                if !(finite(&[*lo, *mode, *hi]) && lo < hi && lo <= mode && mode <= hi) {
                    return Err(format!("triangular needs lo <= mode <= hi with lo < hi, got ({lo}, {mode}, {hi})"));
                }
            }
            Distribution::Ramp { lo, hi, w0, w1 } => {
                if !(finite(&[*lo, *hi, *w0, *w1]) && lo < hi && *w0 >= 0.0 && *w1 >= 0.0 && w0 + w1 > 0.0) {
                    return Err("ramp needs lo < hi and non-negative weights, not both zero".into());
                }
            }
            Distribution::Linear { lower, upper } => {
                for a in [lower, upper] {
                    if a.coef.len() > index {
                        return Err(format!("linear bound refers to {} earlier coordinates, only {index} exist", a.coef.len()));
                    }
                    if !finite(&[a.offset]) || !finite(&a.coef) {
                        return Err("linear bound has non-finite coefficients".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Conditional support given the preceding coordinates.
    fn support(&self, prev: &[f64]) -> (f64, f64) {
        match self {
            Distribution::Uniform { lo, hi }
            | Distribution::Triangular { lo, hi, .. }
            | Distribution::Ramp { lo, hi, .. } => (*lo, *hi),
            Distribution::Linear { lower, upper } => (lower.eval(prev), upper.eval(prev)),
        }
    }

    fn inverse_cdf(&self, u: f64, prev: &[f64]) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => lo + u * (hi - lo),
            Distribution::Triangular { lo, mode, hi } => {
                let c = (mode - lo) / (hi - lo);
                if u < c {
                    lo + (u * (hi - lo) * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * (hi - lo) * (hi - mode)).sqrt()
                }
            }
            Distribution::Ramp { lo, hi, w0, w1 } => {
                // CDF on z ∈ [0,1]: (w0 z + (w1 - w0) z²/2) / ((w0 + w1)/2); solved in
                // the cancellation-free form of the quadratic root
                let s = w0 + w1;
                let disc = w0 * w0 + (w1 - w0) * u * s;
                let denom = w0 + disc.max(0.0).sqrt();
                let z = if denom > 0.0 { u * s / denom } else { 0.0 };
                lo + z.clamp(0.0, 1.0) * (hi - lo)
            }
            Distribution::Linear { .. } => {
                let (a, b) = self.support(prev);
                a + u * (b - a)
            }
        }
    }
}

/// One named coordinate of a [`Domain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    #[serde(flatten)]
    pub dist: Distribution,
}

/// A region of parameter space described by a chain of conditional
/// distributions `F₁, F₂|₁, …`, in coordinate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain", into = "RawDomain")]
pub struct Domain {
    dims: Vec<Dimension>,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDomain {
    dimensions: Vec<Dimension>,
}

impl TryFrom<RawDomain> for Domain {
    type Error = DesignError;

    fn try_from(raw: RawDomain) -> Result<Self, DesignError> {
        Domain::new(raw.dimensions)
    }
}

impl From<Domain> for RawDomain {
    fn from(d: Domain) -> Self {
        RawDomain { dimensions: d.dims }
    }
}

impl Domain {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, DesignError> {
        if dims.is_empty() {
            return Err(DesignError::EmptyDomain);
        }
        let mut box_lo = Vec::with_capacity(dims.len());
        let mut box_hi = Vec::with_capacity(dims.len());
        for (j, dim) in dims.iter().enumerate() {
            dim.dist
                .validate(j)
                .map_err(|message| DesignError::InvalidDistribution { dim: dim.name.clone(), message })?;
            let (lo, hi) = match &dim.dist {
                Distribution::Linear { lower, upper } => {
                    let (l, _) = lower.range(&box_lo, &box_hi);
                    let (_, h) = upper.range(&box_lo, &box_hi);
                    (l, h)
                }
                other => other.support(&[]),
            };
            if !(lo < hi) {
                return Err(DesignError::InvalidDistribution {
                    dim: dim.name.clone(),
                    message: "coordinate has an empty range".into(),
                });
            }
            box_lo.push(lo);
            box_hi.push(hi);
        }
        Ok(Self { dims, box_lo, box_hi })
    }

    /// Independent uniform box.
    pub fn uniform_box(ranges: &[(&str, f64, f64)]) -> Result<Self, DesignError> {
        Self::new(
            ranges
                .iter()
                .map(|&(name, lo, hi)| Dimension {
                    name: name.into(),
                    unit: String::new(),
                    dist: Distribution::Uniform { lo, hi },
                })
                .collect(),
        )
    }

    /// Uniform distribution over `{x₁ ∈ [lo, hi], x₂ ∈ [a + b·x₁, c + e·x₁]}`,
    /// with the first marginal weighted by the strip width so the joint
    /// density is uniform. Requires the width to be an affine function that
    /// is non-negative at both ends.
    pub fn linear_region(
        names: (&str, &str),
        x1: (f64, f64),
        lower: (f64, f64),
        upper: (f64, f64),
    ) -> Result<Self, DesignError> {
        let width = |x: f64| (upper.0 + upper.1 * x) - (lower.0 + lower.1 * x);
        let (w0, w1) = (width(x1.0), width(x1.1));
        Self::new(vec![
            Dimension {
                name: names.0.into(),
                unit: String::new(),
                dist: Distribution::Ramp { lo: x1.0, hi: x1.1, w0, w1 },
            },
            Dimension {
                name: names.1.into(),
                unit: String::new(),
                dist: Distribution::Linear {
                    lower: Affine { offset: lower.0, coef: vec![lower.1] },
                    upper: Affine { offset: upper.0, coef: vec![upper.1] },
                },
            },
        ])
    }

    pub fn from_json_str(s: &str) -> Result<Self, DesignError> {
        serde_json::from_str(s).map_err(|e| DesignError::Parse(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self, DesignError> {
        toml::from_str(s).map_err(|e| DesignError::Parse(e.to_string()))
    }

    /// Loads a TOML (`.toml`) or JSON (anything else) domain file.
    pub fn load(path: &Path) -> Result<Self, DesignError> {
        let text = std::fs::read_to_string(path).map_err(|e| DesignError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml_str(&text)
        } else {
            Self::from_json_str(&text)
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    /// Axis-aligned box containing the domain.
    pub fn bounding_box(&self) -> (&[f64], &[f64]) {
        (&self.box_lo, &self.box_hi)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.dims.iter().enumerate().all(|(j, dim)| {
            let (a, b) = dim.dist.support(&x[..j]);
            let slack = MEMBERSHIP_TOL * (self.box_hi[j] - self.box_lo[j]);
            x[j] >= a - slack && x[j] <= b + slack
        })
    }

    /// Maps a unit-cube point into the domain through the conditional
    /// inverse CDFs, one coordinate at a time.
    pub fn inv_rosenblatt(&self, u: &[f64]) -> Result<Vec<f64>, DesignError> {
        if u.len() != self.dim() {
            return Err(DesignError::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        let mut x = Vec::with_capacity(u.len());
        for (j, (dim, &uj)) in self.dims.iter().zip(u).enumerate() {
            if !(0.0..=1.0).contains(&uj) {
                return Err(DesignError::OutsideUnitCube { index: j, value: uj });
            }
            let (a, b) = dim.dist.support(&x);
            if b < a {
                return Err(DesignError::EmptyConditional { dim: dim.name.clone() });
            }
            let v = dim.dist.inverse_cdf(uj, &x);
            x.push(v.clamp(a, b));
        }
        Ok(x)
    }
}
