//! Seeded experiment grids over synthetic clusters.
//!
//! Every analysis runs the simulated session once per (suite entry, seed,
//! grid value) and reports one row per grid value. Rows come back in grid
//! order regardless of how the runs were scheduled.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::Strategy;
use crate::config::{RunConfig, Variant};
use crate::corpus::ConceptUnit;
use crate::error::{Error, Result};
use crate::simulate::{rounds_to_converge, simulate, simulate_traced, SimulationOutcome, CONVERGENCE_FRACTION};
use crate::simuser::{make_synthetic_cluster, oracle_rouge1, SyntheticInstance, SyntheticSpec};
use crate::stats::{mean, stddev};

const BUNDLED_SUITE: &str = include_str!("../../data/suite.json");

pub const DEFAULT_BUDGETS: [usize; 6] = [10, 15, 20, 25, 30, 35];
pub const DEFAULT_FEATURE_SIZES: [usize; 6] = [2, 5, 8, 10, 12, 15];

/// The synthetic clusters shipped with the crate.
pub fn bundled_suite() -> Vec<SyntheticSpec> {
    serde_json::from_str(BUNDLED_SUITE).expect("bundled suite parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Budget,
    Unit,
    Strategy,
    Feature,
    Ablation,
}

impl Analysis {
    pub const ALL: [Analysis; 5] = [Analysis::Budget, Analysis::Unit, Analysis::Strategy, Analysis::Feature, Analysis::Ablation];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Budget => "budget",
            Analysis::Unit => "unit",
            Analysis::Strategy => "strategy",
            Analysis::Feature => "feature",
            Analysis::Ablation => "ablation",
        }
    }

    /// Header of the first CSV column.
    pub fn key_column(self) -> &'static str {
        match self {
            Analysis::Budget => "budget",
            Analysis::Unit => "unit",
            Analysis::Strategy => "strategy",
            Analysis::Feature => "features",
            Analysis::Ablation => "variant",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown analysis `{s}`")))
    }
}

/// What to sweep and over which clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub base: RunConfig,
    pub suite: Vec<SyntheticSpec>,
    pub seeds: Vec<u64>,
    pub budgets: Vec<usize>,
    pub units: Vec<ConceptUnit>,
    pub strategies: Vec<Strategy>,
    pub feature_sizes: Vec<usize>,
    pub variants: Vec<Variant>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            base: RunConfig::default(),
            suite: bundled_suite(),
            seeds: (0..20).collect(),
            budgets: DEFAULT_BUDGETS.to_vec(),
            units: ConceptUnit::ALL.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            feature_sizes: DEFAULT_FEATURE_SIZES.to_vec(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

impl Grid {
    pub fn with_seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = seeds.into_iter().collect();
        self
    }

    pub fn with_suite(mut self, suite: Vec<SyntheticSpec>) -> Self {
        self.suite = suite;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.suite.is_empty() || self.seeds.is_empty() {
            return Err(Error::validation("a grid needs at least one cluster and one seed"));
        }
        for spec in &self.suite {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Aggregate over every run sharing one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub key: String,
    pub runs: usize,
    pub rouge1_mean: f64,
    pub rouge1_std: f64,
    pub rouge2_mean: f64,
    pub rouge2_std: f64,
    pub value_mean: f64,
    pub value_std: f64,
    pub tau_mean: f64,
    pub rounds_mean: f64,
    pub rounds_std: f64,
}

impl Row {
    fn aggregate(key: String, runs: &[Run]) -> Self {
        let col = |f: &dyn Fn(&Run) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let r1 = col(&|r| r.outcome.rouge.rouge1);
        let r2 = col(&|r| r.outcome.rouge.rouge2);
        let v = col(&|r| r.outcome.ground_truth_value);
        let tau = col(&|r| r.outcome.kendall_tau);
        let rounds = col(&|r| r.converged as f64);
        Self {
            key,
            runs: runs.len(),
            rouge1_mean: mean(&r1),
            rouge1_std: stddev(&r1),
            rouge2_mean: mean(&r2),
            rouge2_std: stddev(&r2),
            value_mean: mean(&v),
            value_std: stddev(&v),
            tau_mean: mean(&tau),
            rounds_mean: mean(&rounds),
            rounds_std: stddev(&rounds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub analysis: Analysis,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn header(&self) -> Vec<&'static str> {
        vec![
            self.analysis.key_column(),
            "runs",
            "rouge1_mean",
            "rouge1_std",
            "rouge2_mean",
            "rouge2_std",
            "value_mean",
            "value_std",
            "tau_mean",
            "rounds_mean",
            "rounds_std",
        ]
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse(format!("csv: {e}"));
        w.write_record(self.header()).map_err(csv_err)?;
        for r in &self.rows {
            let nums = [
                r.rouge1_mean,
                r.rouge1_std,
                r.rouge2_mean,
                r.rouge2_std,
                r.value_mean,
                r.value_std,
                r.tau_mean,
                r.rounds_mean,
                r.rounds_std,
            ];
            let mut rec = vec![r.key.clone(), r.runs.to_string()];
            rec.extend(nums.iter().map(|x| format!("{x:.6}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn row(&self, key: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.key == key)
    }
}

struct Run {
    outcome: SimulationOutcome,
    converged: usize,
}

/// One simulated session, configured for a single grid cell.
#[derive(Debug, Clone)]
struct Cell {
    key: usize,
    spec: SyntheticSpec,
    config: RunConfig,
    features: Option<usize>,
    trace: bool,
}

fn run_cell(cell: &Cell) -> Result<Run> {
    let SyntheticInstance { mut cluster, user, .. } = make_synthetic_cluster(&cell.spec, cell.config.seed)?;
    if let Some(k) = cell.features {
        let k = k.clamp(1, cluster.schema.len().max(1));
        cluster.schema.truncate(k);
        for c in &mut cluster.concepts {
            c.features.0.truncate(k);
        }
    }
    if cell.trace {
        let bound = oracle_rouge1(&cluster, cell.config.length_budget)?;
        let (outcome, _) = simulate_traced(cluster, &user, &cell.config)?;
        let converged = rounds_to_converge(&outcome.drafts, bound, CONVERGENCE_FRACTION);
        Ok(Run { outcome, converged })
    } else {
        let outcome = simulate(cluster, &user, &cell.config)?;
        Ok(Run { converged: outcome.rounds, outcome })
    }
}

fn sweep<K: fmt::Display>(
    analysis: Analysis,
    grid: &Grid,
    keys: &[K],
    trace: bool,
    configure: impl Fn(&K, &mut SyntheticSpec, &mut RunConfig, &mut Option<usize>),
) -> Result<Table> {
    grid.validate()?;
    let mut cells = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        for spec in &grid.suite {
            for &seed in &grid.seeds {
                let mut spec = spec.clone();
                let mut config = RunConfig { seed, ..grid.base.clone() };
                spec.unit = config.unit;
                let mut features = None;
                configure(key, &mut spec, &mut config, &mut features);
                config.validate()?;
                cells.push(Cell { key: i, spec, config, features, trace });
            }
        }
    }
    let runs: Vec<Run> = cells.par_iter().map(run_cell).collect::<Result<_>>()?;
    let mut grouped: Vec<Vec<Run>> = keys.iter().map(|_| Vec::new()).collect();
    for (cell, run) in cells.iter().zip(runs) {
        grouped[cell.key].push(run);
    }
    let rows = keys.iter().zip(&grouped).map(|(k, g)| Row::aggregate(k.to_string(), g)).collect();
    Ok(Table { analysis, rows })
}

pub fn run_budget_analysis(grid: &Grid) -> Result<Table> {
    sweep(Analysis::Budget, grid, &grid.budgets, false, |b, _, c, _| c.budget = *b)
}

/// Rounds until the draft reaches most of the upper-bound ROUGE-1, per concept unit.
pub fn run_unit_analysis(grid: &Grid) -> Result<Table> {
    sweep(Analysis::Unit, grid, &grid.units, true, |u, s, c, _| {
        s.unit = *u;
        c.unit = *u;
    })
}

pub fn run_strategy_analysis(grid: &Grid) -> Result<Table> {
    sweep(Analysis::Strategy, grid, &grid.strategies, false, |st, _, c, _| c.strategy = *st)
}

/// Keeps the first `k` concept features; sizes past the schema repeat the full set.
pub fn run_feature_analysis(grid: &Grid) -> Result<Table> {
    sweep(Analysis::Feature, grid, &grid.feature_sizes, false, |k, _, _, f| *f = Some(*k))
}

pub fn run_ablation(grid: &Grid) -> Result<Table> {
    sweep(Analysis::Ablation, grid, &grid.variants, false, |v, _, c, _| c.variant = *v)
}

pub fn run_analysis(analysis: Analysis, grid: &Grid) -> Result<Table> {
    match analysis {
        Analysis::Budget => run_budget_analysis(grid),
        Analysis::Unit => run_unit_analysis(grid),
        Analysis::Strategy => run_strategy_analysis(grid),
        Analysis::Feature => run_feature_analysis(grid),
        Analysis::Ablation => run_ablation(grid),
    }
}

/// Best ROUGE-1 any summary of the generated cluster can reach.
pub fn oracle_bound(spec: &SyntheticSpec, seed: u64, length_budget: usize) -> Result<f64> {
    let inst = make_synthetic_cluster(spec, seed)?;
    oracle_rouge1(&inst.cluster, length_budget)
}
