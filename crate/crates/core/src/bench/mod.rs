//! Benchmark harness: runs strategies over a budget sweep and scores each
//! resulting surrogate by its RMSE on a fixed test grid.

mod config;
mod field;

pub use config::{BenchmarkConfig, Scenario};
pub use field::{export_field, field_grid};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{run_campaign, CampaignConfig, CampaignError, CampaignRecord, Strategy};
use crate::blackbox::{BlackBox, BlackBoxError};
use crate::design::{uniform_design, DesignError};
use crate::gp::{GpError, Surrogate};
use crate::robustness::agm_rob;
use crate::seed::derive_seed;
use crate::stl::{Formula, StlError};

/// Offset separating random-strategy seeds from the mepe/ud ones.
const RANDOM_SEED_STREAM: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("black box: {0}")]
    BlackBox(#[from] BlackBoxError),
    #[error("{strategy} campaign (budget {budget}, seed {seed}): {source}")]
    Campaign {
        strategy: Strategy,
        budget: usize,
        seed: u64,
        #[source]
        source: CampaignError,
    },
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("monitoring failed: {0}")]
    Stl(#[from] StlError),
    #[error("{0}")]
    Io(String),
    #[error("benchmark assertion failed: {0}")]
    Assertion(String),
}

impl BenchError {
    /// Process exit code: 1 assertion failure, 2 configuration error,
    /// 3 black-box or run failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Assertion(_) => 1,
            BenchError::Config(_) | BenchError::Design(_) | BenchError::Io(_) => 2,
            BenchError::Campaign { source, .. } => match source {
                CampaignError::InvalidConfig(_) | CampaignError::Design(_) | CampaignError::Io(_) => 2,
                _ => 3,
            },
            BenchError::BlackBox(_) | BenchError::Gp(_) | BenchError::Stl(_) => 3,
        }
    }
}

/// RMSE of a surrogate against known true values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseResult {
    pub rmse: f64,
    /// Grid points with a true value.
    pub used: usize,
    /// Grid points dropped because the black box failed there.
    pub dropped: usize,
}

/// RMSE over the grid points whose true value is known.
pub fn rmse_against(s: &Surrogate, grid: &[Vec<f64>], truth: &[Option<f64>]) -> Result<RmseResult, GpError> {
    let (pts, ys): (Vec<Vec<f64>>, Vec<f64>) =
        grid.iter().zip(truth).filter_map(|(x, y)| y.map(|y| (x.clone(), y))).unzip();
    let dropped = grid.len() - pts.len();
    if pts.is_empty() {
        return Ok(RmseResult { rmse: f64::NAN, used: 0, dropped });
    }
    let preds = s.predict_many(&pts)?;
    let sse: f64 = preds.iter().zip(&ys).map(|(p, y)| (p.mean - y).powi(2)).sum();
    Ok(RmseResult { rmse: (sse / pts.len() as f64).sqrt(), used: pts.len(), dropped })
}

/// True robustness at every grid point; failed runs become `None`.
pub fn true_values(formula: &Formula, bb: &mut dyn BlackBox, grid: &[Vec<f64>]) -> Result<Vec<Option<f64>>, StlError> {
    grid.iter()
        .map(|x| match bb.evaluate(x) {
            Ok(tr) => Ok(Some(agm_rob(formula, &tr, 0)?.value())),
            Err(e) => {
                log::warn!("test point {x:?} dropped: {e}");
                Ok(None)
            }
        })
        .collect()
}

/// `sqrt(mean((f(x) - f̂(x))²))` over `grid`, with `f` the robustness of
/// `formula` on the black box's trace.
pub fn test_rmse(
    s: &Surrogate,
    formula: &Formula,
    bb: &mut dyn BlackBox,
    grid: &[Vec<f64>],
) -> Result<RmseResult, BenchError> {
    let truth = true_values(formula, bb, grid)?;
    Ok(rmse_against(s, grid, &truth)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std, median: median(values) }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Results for one (strategy, budget) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: Strategy,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub rmse: Vec<f64>,
    pub summary: Summary,
    /// Campaign record file per seed, when records are written. A `mepe`
    /// record covers every budget through its checkpoints.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<String>,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: String,
    pub formula: String,
    pub config: BenchmarkConfig,
    pub test_points: usize,
    pub test_points_dropped: usize,
    pub cells: Vec<Cell>,
}

impl BenchmarkReport {
    pub fn cell(&self, strategy: Strategy, budget: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.strategy == strategy && c.budget == budget)
    }

    /// `strategy,budget,n,mean,std,median`
    pub fn write_rmse_csv<W: std::io::Write>(&self, w: W) -> Result<(), BenchError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| BenchError::Io(e.to_string());
        out.write_record(["strategy", "budget", "n", "mean", "std", "median"]).map_err(io)?;
        for c in &self.cells {
            out.write_record([
                c.strategy.to_string(),
                c.budget.to_string(),
                c.rmse.len().to_string(),
                c.summary.mean.to_string(),
                c.summary.std.to_string(),
                c.summary.median.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| BenchError::Io(e.to_string()))
    }

    /// Checks that median RMSE at the largest budget is non-decreasing along
    /// `order` (best strategy first).
    pub fn check_ordering(&self, order: &[Strategy]) -> Result<(), BenchError> {
        let Some(&budget) = self.config.budgets.last() else { return Ok(()) };
        let medians: Vec<(Strategy, f64)> = order
            .iter()
            .map(|&s| {
                self.cell(s, budget)
                    .map(|c| (s, c.summary.median))
                    .ok_or_else(|| BenchError::Config(format!("assert_ordering names {s}, which was not run")))
            })
            .collect::<Result<_, _>>()?;
        for w in medians.windows(2) {
            if w[0].1 > w[1].1 {
                return Err(BenchError::Assertion(format!(
                    "at N = {budget}, median RMSE of {} ({:.6}) exceeds {} ({:.6})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }
}

struct Job {
    strategy: Strategy,
    seed: u64,
    /// Budgets this job produces results for.
    budgets: Vec<usize>,
}

struct JobOutput {
    rmse: Vec<f64>,
    record_paths: Vec<String>,
    /// Final surrogate of the job's last campaign.
    last: Surrogate,
    wallclock_s: f64,
}

fn campaign_config(cfg: &BenchmarkConfig, strategy: Strategy, budget: usize, seed: u64) -> CampaignConfig {
    CampaignConfig {
        n_init: cfg.n_init,
        pool_size: cfg.pool_size,
        seed,
        alpha_rule: cfg.alpha_rule,
        fit_restarts: cfg.fit_restarts,
        refit_restarts: cfg.refit_restarts,
        refit_every: cfg.refit_every,
        ..CampaignConfig::new(strategy, budget)
    }
}

fn write_record(dir: &Path, rec: &CampaignRecord) -> Result<String, BenchError> {
    let name = format!("campaign-{}-{}-{}.json", rec.config.strategy, rec.config.budget, rec.config.seed);
    let text = serde_json::to_string_pretty(rec).map_err(|e| BenchError::Io(e.to_string()))?;
    std::fs::write(dir.join(&name), text).map_err(|e| BenchError::Io(format!("{name}: {e}")))?;
    Ok(name)
}

fn run_job(
    scenario: &Scenario,
    cfg: &BenchmarkConfig,
    job: &Job,
    grid: &[Vec<f64>],
    truth: &[Option<f64>],
    out_dir: Option<&Path>,
) -> Result<JobOutput, BenchError> {
    let start = Instant::now();
    let mut bb = scenario.blackbox.instantiate()?;
    let wrap = |budget: usize| {
        let (strategy, seed) = (job.strategy, job.seed);
        move |source| BenchError::Campaign { strategy, budget, seed, source }
    };
    let mut rmse = Vec::with_capacity(job.budgets.len());
    let mut record_paths = Vec::new();
    let last;
    if job.strategy == Strategy::Mepe {
        // every smaller budget is a prefix of the largest one
        let max = *job.budgets.last().expect("budgets are non-empty");
        let mut cc = campaign_config(cfg, Strategy::Mepe, max, job.seed);
        cc.checkpoints = job.budgets.clone();
        let rec = run_campaign(&scenario.formula, &scenario.domain, &mut bb, &cc).map_err(wrap(max))?;
        for &b in &job.budgets {
            let snap = rec.checkpoint(b).expect("checkpoint recorded for every budget");
            let s = Surrogate::try_from(snap.surrogate.clone())?;
            rmse.push(rmse_against(&s, grid, truth)?.rmse);
        }
        if let Some(dir) = out_dir {
            record_paths.push(write_record(dir, &rec)?);
        }
        last = rec.final_surrogate()?;
    } else {
        let mut final_s = None;
        for &b in &job.budgets {
            let cc = campaign_config(cfg, job.strategy, b, job.seed);
            let rec = run_campaign(&scenario.formula, &scenario.domain, &mut bb, &cc).map_err(wrap(b))?;
            let s = rec.final_surrogate()?;
            rmse.push(rmse_against(&s, grid, truth)?.rmse);
            if let Some(dir) = out_dir {
                record_paths.push(write_record(dir, &rec)?);
            }
            final_s = Some(s);
        }
        last = final_s.expect("budgets are non-empty");
    }
    Ok(JobOutput { rmse, record_paths, last, wallclock_s: start.elapsed().as_secs_f64() })
}

/// Runs every strategy over the budget sweep. With `out_dir`, also writes
/// `report.json`, `rmse.csv`, per-campaign records and (when a field
/// resolution is configured) `field.csv` for the first strategy's first
/// seed at the largest budget.
pub fn run_benchmark(cfg: &BenchmarkConfig, out_dir: Option<&Path>) -> Result<BenchmarkReport, BenchError> {
    cfg.validate()?;
    let scenario = cfg.resolve()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::Io(format!("{}: {e}", dir.display())))?;
    }
    let grid = uniform_design(&scenario.domain, cfg.test_points)?.points;
    let truth = {
        let mut bb = scenario.blackbox.instantiate()?;
        true_values(&scenario.formula, &mut bb, &grid)?
    };
    let dropped = truth.iter().filter(|t| t.is_none()).count();
    if dropped == truth.len() {
        return Err(BenchError::BlackBox(BlackBoxError::Remote("every test point failed".into())));
    }

    let mut jobs = Vec::new();
    for &strategy in &cfg.strategies {
        let (n, stream) = match strategy {
            Strategy::Random => (cfg.repetitions, RANDOM_SEED_STREAM),
            _ => (cfg.seeds, 0),
        };
        for k in 0..n as u64 {
            jobs.push(Job { strategy, seed: derive_seed(cfg.master_seed, stream + k), budgets: cfg.budgets.clone() });
        }
    }
    let outputs: Vec<Result<JobOutput, BenchError>> = jobs
        .par_iter()
        .map(|job| run_job(&scenario, cfg, job, &grid, &truth, out_dir))
        .collect();

    let mut cells: BTreeMap<(Strategy, usize), Cell> = BTreeMap::new();
    let mut field_source = None;
    for (job, out) in jobs.iter().zip(outputs) {
        let out = out?;
        for (k, &b) in job.budgets.iter().enumerate() {
            let cell = cells.entry((job.strategy, b)).or_insert_with(|| Cell {
                strategy: job.strategy,
                budget: b,
                seeds: Vec::new(),
                rmse: Vec::new(),
                summary: Summary { mean: 0.0, std: 0.0, median: 0.0 },
                records: Vec::new(),
                wallclock_s: 0.0,
            });
            cell.seeds.push(job.seed);
            cell.rmse.push(out.rmse[k]);
            cell.wallclock_s += out.wallclock_s / job.budgets.len() as f64;
            if job.strategy == Strategy::Mepe {
                cell.records.extend(out.record_paths.iter().cloned());
            } else if let Some(p) = out.record_paths.get(k) {
                cell.records.push(p.clone());
            }
        }
        if field_source.is_none() {
            field_source = Some(out.last);
        }
    }
    // report order follows the configured strategy order
    let mut ordered: Vec<Cell> = Vec::with_capacity(cells.len());
    for &s in &cfg.strategies {
        for &b in &cfg.budgets {
            if let Some(mut c) = cells.remove(&(s, b)) {
                c.summary = Summary::of(&c.rmse);
                ordered.push(c);
            }
        }
    }
    let report = BenchmarkReport {
        scenario: scenario.name.clone(),
        formula: scenario.formula.to_string(),
        config: cfg.clone(),
        test_points: grid.len(),
        test_points_dropped: dropped,
        cells: ordered,
    };

    if let Some(dir) = out_dir {
        let io = |name: &str, e: std::io::Error| BenchError::Io(format!("{name}: {e}"));
        let json = serde_json::to_string_pretty(&report).map_err(|e| BenchError::Io(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json).map_err(|e| io("report.json", e))?;
        let f = std::fs::File::create(dir.join("rmse.csv")).map_err(|e| io("rmse.csv", e))?;
        report.write_rmse_csv(f)?;
        if let (Some(res), Some(s)) = (cfg.field_resolution, field_source.as_ref()) {
            let f = std::fs::File::create(dir.join("field.csv")).map_err(|e| io("field.csv", e))?;
            export_field(s, &scenario.domain, &vec![res; scenario.domain.dim()], f)?;
        }
    }
    if !cfg.assert_ordering.is_empty() {
        report.check_ordering(&cfg.assert_ordering)?;
    }
    Ok(report)
}
