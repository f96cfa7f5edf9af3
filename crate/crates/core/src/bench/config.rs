use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::acquisition::{AlphaRule, Strategy};
use crate::blackbox::{BlackBoxSpec, BuiltinId};
use crate::design::Domain;
use crate::stl::{parse_formula, Formula};

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_budgets() -> Vec<usize> {
    (1..=20).map(|k| 10 * k).collect()
}
fn default_n_init() -> usize {
    50
}
fn default_test_points() -> usize {
    1000
}
fn default_repetitions() -> usize {
    30
}
fn default_seeds() -> usize {
    10
}
fn default_pool_size() -> usize {
    4096
}
fn default_fit_restarts() -> usize {
    5
}
fn one() -> usize {
    1
}

/// A benchmark sweep, loadable from TOML or JSON.
///
/// The system under test is a built-in scenario named by `scenario`, or any
/// black box given by `blackbox` together with a formula and a domain.
/// Relative file paths are resolved against the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blackbox: Option<BlackBoxSpec>,
    /// Formula text; overrides the scenario's own formula.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_file: Option<PathBuf>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Strictly increasing budgets `N`.
    #[serde(default = "default_budgets")]
    pub budgets: Vec<usize>,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    /// Size of the lattice test grid.
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    /// Repetitions of the `random` strategy.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Seeds for `mepe` and `ud`.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_fit_restarts")]
    pub fit_restarts: usize,
    #[serde(default = "one")]
    pub refit_restarts: usize,
    #[serde(default = "one")]
    pub refit_every: usize,
    #[serde(default)]
    pub alpha_rule: AlphaRule,
    /// Points per axis of the exported surrogate field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_resolution: Option<usize>,
    /// Expected median-RMSE order at the largest budget, best first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assert_ordering: Vec<Strategy>,
}

/// The resolved system under test.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub formula: Formula,
    pub domain: Domain,
    pub blackbox: BlackBoxSpec,
}

impl BenchmarkConfig {
    /// Defaults for a built-in scenario.
    pub fn builtin(id: BuiltinId) -> Self {
        Self::from_toml_str(&format!("scenario = \"{}\"", id.name())).expect("minimal configuration parses")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, BenchError> {
        toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, BenchError> {
        serde_json::from_str(s).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Loads a TOML (`.toml`) or JSON (anything else) configuration and
    /// makes its file references absolute.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml_str(&text)?
        } else {
            Self::from_json_str(&text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.formula_file, &mut cfg.domain_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.budgets.is_empty() {
            return bad("budgets must not be empty".into());
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("budgets must be strictly increasing, got {:?}", self.budgets));
        }
        if self.strategies.is_empty() {
            return bad("no strategies selected".into());
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return bad("strategies must not repeat".into());
        }
        if self.test_points == 0 || self.repetitions == 0 || self.seeds == 0 {
            return bad("test_points, repetitions and seeds must be positive".into());
        }
        if self.field_resolution == Some(0) {
            return bad("field_resolution must be positive".into());
        }
        if self.formula.is_some() && self.formula_file.is_some() {
            return bad("give at most one of formula and formula_file".into());
        }
        if self.domain.is_some() && self.domain_file.is_some() {
            return bad("give at most one of domain and domain_file".into());
        }
        let max = *self.budgets.last().expect("non-empty");
        for &s in &self.strategies {
            let mut cc = super::campaign_config(self, s, max, 0);
            // the smallest budget is the binding one for ud and random
            if s != Strategy::Mepe {
                cc.budget = self.budgets[0];
            }
            cc.validate().map_err(|e| BenchError::Config(format!("{s}: {e}")))?;
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Scenario, BenchError> {
        let builtin = BuiltinId::from_name(&self.scenario);
        let blackbox = match (&self.blackbox, builtin) {
            (Some(b), _) => b.clone(),
            (None, Some(id)) => BlackBoxSpec::builtin(id),
            (None, None) => {
                return Err(BenchError::Config(format!(
                    "`{}` is not a built-in scenario and no blackbox is given",
                    self.scenario
                )))
            }
        };
        let formula_text = match (&self.formula, &self.formula_file, builtin) {
            (Some(t), _, _) => t.clone(),
            (None, Some(p), _) => std::fs::read_to_string(p)
                .map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))?,
            (None, None, Some(id)) => id.formula_text().to_string(),
            (None, None, None) => return Err(BenchError::Config("no formula given".into())),
        };
        let formula = parse_formula(&formula_text).map_err(|e| BenchError::Config(e.to_string()))?;
        let domain = match (&self.domain, &self.domain_file, builtin) {
            (Some(d), _, _) => d.clone(),
            (None, Some(p), _) => Domain::load(p).map_err(|e| BenchError::Config(e.to_string()))?,
            (None, None, Some(id)) => id.domain(),
            (None, None, None) => return Err(BenchError::Config("no domain given".into())),
        };
        Ok(Scenario { name: self.scenario.clone(), formula, domain, blackbox })
    }
}
