use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::{BlackBox, BlackBoxError};
use crate::design::{candidate_pool, random_design, uniform_design, DesignError, DesignMatrix, Domain};
use crate::gp::{Bounds, FitOptions, GpError, Kernel, Surrogate, SurrogateSnapshot, TrainingSet};
use crate::robustness::agm_rob;
use crate::seed::derive_seed;
use crate::stl::{parse_formula, Formula, StlError};

use super::{argmax_first, epe_value, sq_dist, update_alpha, AlphaRule, ALPHA_INIT};

/// Candidates this close (normalized units) to an evaluated point are dropped.
const SAME_POINT_TOL: f64 = 1e-12;

const STREAM_POOL: u64 = 1;
const STREAM_RANDOM: u64 = 2;
const STREAM_FIT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Maximize expected prediction error over a candidate pool.
    Mepe,
    /// One lattice design of the full budget.
    Ud,
    /// Independent random draws.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Mepe, Strategy::Ud, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mepe => "mepe",
            Strategy::Ud => "ud",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected mepe, ud or random)"))
    }
}

fn default_n_init() -> usize {
    50
}
fn default_pool_size() -> usize {
    4096
}
fn default_restarts() -> usize {
    5
}
fn default_max_iters() -> usize {
    100
}
fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub strategy: Strategy,
    /// Number of black-box runs chosen by the strategy. For `mepe` these come
    /// on top of the `n_init` initial runs.
    pub budget: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub alpha_rule: AlphaRule,
    /// Starting kernel; defaults to [`Kernel::default_for`] the domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    /// Restarts for every from-scratch hyperparameter fit.
    #[serde(default = "default_restarts")]
    pub fit_restarts: usize,
    #[serde(default = "default_max_iters")]
    pub fit_max_iters: usize,
    /// Restarts for the refits inside the adaptive loop, the first of which
    /// starts from the current hyperparameters.
    #[serde(default = "one")]
    pub refit_restarts: usize,
    /// Re-optimize hyperparameters after every `refit_every` successful
    /// adaptive runs; in between, the surrogate is re-conditioned on the new
    /// data with fixed hyperparameters.
    #[serde(default = "one")]
    pub refit_every: usize,
    /// Adaptive-run counts at which to snapshot the `mepe` surrogate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<usize>,
}

impl CampaignConfig {
    pub fn new(strategy: Strategy, budget: usize) -> Self {
        Self {
            strategy,
            budget,
            n_init: default_n_init(),
            pool_size: default_pool_size(),
            seed: 0,
            alpha_rule: AlphaRule::default(),
            kernel: None,
            fit_restarts: default_restarts(),
            fit_max_iters: default_max_iters(),
            refit_restarts: 1,
            refit_every: 1,
            checkpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| Err(CampaignError::InvalidConfig(m.into()));
        match self.strategy {
            Strategy::Mepe => {
                if self.n_init < 2 {
                    return bad("n_init must be at least 2");
                }
                if self.pool_size < self.budget.max(1) {
                    return bad("pool_size must be at least the budget");
                }
            }
            Strategy::Ud | Strategy::Random => {
                if self.budget < 2 {
                    return bad("ud and random need a budget of at least 2");
                }
            }
        }
        if self.fit_restarts == 0 || self.refit_restarts == 0 || self.refit_every == 0 {
            return bad("restart counts and refit_every must be positive");
        }
        Ok(())
    }

    /// The candidate pool a `mepe` campaign with this configuration uses.
    pub fn candidate_pool(&self, dom: &Domain) -> Result<DesignMatrix, DesignError> {
        candidate_pool(dom, self.pool_size, derive_seed(self.seed, STREAM_POOL))
    }

    fn fit_options(&self, restarts: usize, fit_index: u64) -> FitOptions {
        FitOptions {
            restarts,
            seed: derive_seed(derive_seed(self.seed, STREAM_FIT), fit_index),
            max_iters: self.fit_max_iters,
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("monitoring failed: {0}")]
    Stl(#[from] StlError),
    #[error("only {successes} runs succeeded; a surrogate needs at least 2 (last failure: {last_error})")]
    InsufficientData { successes: usize, last_error: String },
    #[error("candidate pool exhausted after {chosen} adaptive runs")]
    PoolExhausted { chosen: usize },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Lattice design seeding the adaptive loop.
    Init,
    /// Chosen by the acquisition function.
    Adaptive,
    /// Part of a non-adaptive design.
    Design,
}

/// One black-box run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub phase: Phase,
    pub x: Vec<f64>,
    /// Robustness at time 0; absent when the black box failed.
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Balance factor used to choose this point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epe: Option<f64>,
    /// Surrogate mean at `x` before the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
    /// Pool index of the chosen candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_index: Option<usize>,
    /// Surrogate hyperparameters used to score the pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Adaptive runs completed, counting failures.
    pub budget: usize,
    pub surrogate: SurrogateSnapshot,
}

/// Complete log of one campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub formula: String,
    pub domain: Domain,
    pub config: CampaignConfig,
    pub evaluations: Vec<Evaluation>,
    pub surrogate: SurrogateSnapshot,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<Checkpoint>,
}

impl CampaignRecord {
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.evaluations.iter().map(|e| e.x.clone()).collect()
    }

    pub fn scores(&self) -> Vec<Option<f64>> {
        self.evaluations.iter().map(|e| e.y).collect()
    }

    pub fn failures(&self) -> usize {
        self.evaluations.iter().filter(|e| e.y.is_none()).count()
    }

    /// Alpha values of the adaptive iterations.
    pub fn alphas(&self) -> Vec<f64> {
        self.evaluations.iter().filter_map(|e| e.alpha).collect()
    }

    pub fn final_surrogate(&self) -> Result<Surrogate, GpError> {
        Surrogate::try_from(self.surrogate.clone())
    }

    pub fn checkpoint(&self, budget: usize) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.budget == budget)
    }

    /// Re-runs every recorded point against `bb`, in order.
    pub fn replay(&self, bb: &mut dyn BlackBox) -> Result<Vec<Option<f64>>, CampaignError> {
        let formula = parse_formula(&self.formula).map_err(|e| CampaignError::InvalidConfig(e.to_string()))?;
        self.evaluations
            .iter()
            .map(|e| Ok(score(&formula, bb, &e.x)?.0.ok()))
            .collect()
    }

    /// Per-run CSV: `iteration, phase, <dims...>, y, alpha, epe, wallclock_ms`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CampaignError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| CampaignError::Io(e.to_string());
        let mut header = vec!["iteration".to_string(), "phase".to_string()];
        header.extend(self.domain.names().iter().map(|s| s.to_string()));
        header.extend(["y", "alpha", "epe", "wallclock_ms"].map(String::from));
        out.write_record(&header).map_err(io)?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for (i, e) in self.evaluations.iter().enumerate() {
            let phase = match e.phase {
                Phase::Init => "init",
                Phase::Adaptive => "adaptive",
                Phase::Design => "design",
            };
            let mut row = vec![i.to_string(), phase.to_string()];
            row.extend(e.x.iter().map(|v| v.to_string()));
            row.extend([opt(e.y), opt(e.alpha), opt(e.epe), e.wallclock_ms.to_string()]);
            out.write_record(&row).map_err(io)?;
        }
        out.flush().map_err(|e| CampaignError::Io(e.to_string()))
    }
}

/// Runs the black box at `x` and monitors the trace at time 0. Black-box
/// failures are returned in the inner result; monitoring failures are fatal.
fn score(formula: &Formula, bb: &mut dyn BlackBox, x: &[f64]) -> Result<(Result<f64, BlackBoxError>, f64), CampaignError> {
    let start = Instant::now();
    let trace = bb.evaluate(x);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match trace {
        Ok(tr) => Ok((Ok(agm_rob(formula, &tr, 0)?.value()), ms)),
        Err(e) => Ok((Err(e), ms)),
    }
}

fn plain_evaluation(phase: Phase, x: Vec<f64>, result: &Result<f64, BlackBoxError>, ms: f64) -> Evaluation {
    Evaluation {
        phase,
        x,
        y: result.as_ref().ok().copied(),
        error: result.as_ref().err().map(|e| e.to_string()),
        alpha: None,
        epe: None,
        predicted: None,
        pool_index: None,
        kernel: None,
        wallclock_ms: ms,
    }
}

fn domain_bounds(dom: &Domain) -> Bounds {
    let (lo, hi) = dom.bounding_box();
    Bounds::new(lo.to_vec(), hi.to_vec()).expect("domain boxes are non-degenerate")
}

/// Evaluates a fixed design and returns its records plus the successful
/// training data.
fn evaluate_design(
    formula: &Formula,
    bb: &mut dyn BlackBox,
    points: Vec<Vec<f64>>,
    phase: Phase,
) -> Result<(Vec<Evaluation>, Vec<Vec<f64>>, Vec<f64>), CampaignError> {
    let mut evals = Vec::with_capacity(points.len());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for x in points {
        let (result, ms) = score(formula, bb, &x)?;
        if let Ok(y) = result {
            xs.push(x.clone());
            ys.push(y);
        } else {
            log::warn!("black-box run at {x:?} failed: {}", result.as_ref().unwrap_err());
        }
        evals.push(plain_evaluation(phase, x, &result, ms));
    }
    Ok((evals, xs, ys))
}

fn require_data(evals: &[Evaluation], n: usize) -> Result<(), CampaignError> {
    if n >= 2 {
        return Ok(());
    }
    let last_error = evals.iter().rev().find_map(|e| e.error.clone()).unwrap_or_default();
    Err(CampaignError::InsufficientData { successes: n, last_error })
}

/// Runs one campaign of `cfg.strategy` against `bb`, scoring every run
/// with the robustness of `formula` at time 0.
pub fn run_campaign(
    formula: &Formula,
    dom: &Domain,
    bb: &mut dyn BlackBox,
    cfg: &CampaignConfig,
) -> Result<CampaignRecord, CampaignError> {
    cfg.validate()?;
    let bounds = domain_bounds(dom);
    let kernel0 = match &cfg.kernel {
        Some(k) => k.clone(),
        None => Kernel::default_for(dom.dim()),
    };
    let record = |evaluations, surrogate: &Surrogate, checkpoints| CampaignRecord {
        formula: formula.to_string(),
        domain: dom.clone(),
        config: cfg.clone(),
        evaluations,
        surrogate: surrogate.snapshot(),
        checkpoints,
    };

    if cfg.strategy != Strategy::Mepe {
        let design = match cfg.strategy {
            Strategy::Ud => uniform_design(dom, cfg.budget)?,
            _ => random_design(dom, cfg.budget, derive_seed(cfg.seed, STREAM_RANDOM))?,
        };
        let (evals, xs, ys) = evaluate_design(formula, bb, design.points, Phase::Design)?;
        require_data(&evals, ys.len())?;
        let s = Surrogate::fit(TrainingSet::new(xs, ys)?, bounds, &kernel0, &cfg.fit_options(cfg.fit_restarts, 0))?;
        return Ok(record(evals, &s, Vec::new()));
    }

    let init = uniform_design(dom, cfg.n_init)?;
    let init_unit: Vec<Vec<f64>> = init.points.iter().map(|x| bounds.to_unit(x)).collect();
    let (mut evals, mut xs, mut ys) = evaluate_design(formula, bb, init.points, Phase::Init)?;
    require_data(&evals, ys.len())?;
    let mut fits = 0u64;
    let mut surrogate = Surrogate::fit(
        TrainingSet::new(xs.clone(), ys.clone())?,
        bounds.clone(),
        &kernel0,
        &cfg.fit_options(cfg.fit_restarts, fits),
    )?;

    let pool = cfg.candidate_pool(dom)?.points;
    let pool_unit: Vec<Vec<f64>> = pool.iter().map(|x| bounds.to_unit(x)).collect();
    let tol2 = SAME_POINT_TOL * SAME_POINT_TOL;
    let mut available: Vec<bool> =
        pool_unit.iter().map(|p| init_unit.iter().all(|q| sq_dist(p, q) >= tol2)).collect();
    // nearest training point (index, squared distance) for every candidate
    let train_unit = surrogate.unit_inputs().to_vec();
    let mut nearest: Vec<(usize, f64)> = pool_unit
        .iter()
        .map(|p| {
            train_unit
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, q)| {
                    let d = sq_dist(p, q);
                    if d < best.1 {
                        (i, d)
                    } else {
                        best
                    }
                })
        })
        .collect();

    let mut checkpoints = Vec::new();
    if cfg.checkpoints.contains(&0) {
        checkpoints.push(Checkpoint { budget: 0, surrogate: surrogate.snapshot() });
    }
    let mut alpha = ALPHA_INIT;
    let mut since_refit = 0;
    for iter in 0..cfg.budget {
        let cv = surrogate.loo_squared_errors();
        let candidates: Vec<usize> = (0..pool.len()).filter(|&j| available[j]).collect();
        let xs_c: Vec<Vec<f64>> = candidates.iter().map(|&j| pool[j].clone()).collect();
        let preds = surrogate.predict_many(&xs_c)?;
        let scored = candidates
            .iter()
            .zip(&preds)
            .map(|(&j, p)| (j, epe_value(alpha, cv[nearest[j].0], p.variance)));
        let Some((chosen, best)) = argmax_first(scored) else {
            return Err(CampaignError::PoolExhausted { chosen: iter });
        };
        available[chosen] = false;
        let k = candidates.binary_search(&chosen).expect("chosen candidate is in the list");
        let (yhat, ecv) = (preds[k].mean, cv[nearest[chosen].0]);
        let x = pool[chosen].clone();

        let (result, ms) = score(formula, bb, &x)?;
        let mut ev = plain_evaluation(Phase::Adaptive, x.clone(), &result, ms);
        ev.alpha = Some(alpha);
        ev.epe = Some(best);
        ev.predicted = Some(yhat);
        ev.pool_index = Some(chosen);
        ev.kernel = Some(surrogate.kernel().clone());
        evals.push(ev);

        match result {
            Ok(y) => {
                xs.push(x);
                ys.push(y);
                let new_index = xs.len() - 1;
                let u = &pool_unit[chosen];
                for (p, nn) in pool_unit.iter().zip(nearest.iter_mut()) {
                    let d = sq_dist(p, u);
                    if d < nn.1 {
                        *nn = (new_index, d);
                    }
                }
                let ts = TrainingSet::new(xs.clone(), ys.clone())?;
                since_refit += 1;
                surrogate = if since_refit >= cfg.refit_every {
                    since_refit = 0;
                    fits += 1;
                    let k0 = surrogate.kernel().clone();
                    Surrogate::fit(ts, bounds.clone(), &k0, &cfg.fit_options(cfg.refit_restarts, fits))?
                } else {
                    Surrogate::new(surrogate.kernel().clone(), ts, bounds.clone())?
                };
                alpha = update_alpha(y, yhat, ecv, cfg.alpha_rule);
            }
            Err(e) => log::warn!("black-box run at {:?} failed: {e}", pool[chosen]),
        }
        if cfg.checkpoints.contains(&(iter + 1)) {
            checkpoints.push(Checkpoint { budget: iter + 1, surrogate: surrogate.snapshot() });
        }
    }
    Ok(record(evals, &surrogate, checkpoints))
}
