//! Monte Carlo harness: repeated day-runs and one-parameter sweeps.
//!
//! Seeds are derived, never drawn: experiment `i` of a batch with master seed
//! `m` runs on `derive_seed(m, [EXPERIMENT, i])`, and sweep point `j` uses
//! `derive_seed(m, [SWEEP_POINT, j])` as the master seed of its batch.
//! Results are therefore fixed by the inputs, whatever the thread count.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::endowments::{load_population, ProfileDocument};
use crate::engine::{check_population, run_day};
use crate::error::{Result, SimError};
use crate::exec::Executor;
use crate::metrics::{aggregate, AggregateMetrics, DayMetrics};
use crate::model::{AgentState, ModelParams};
use crate::rng::derive_seed;

const EXPERIMENT: u64 = 0x4558_5045; // "EXPE"
const SWEEP_POINT: u64 = 0x5357_4550; // "SWEP"

/// Default number of experiments per configuration.
pub const DEFAULT_REPS: usize = 1000;

pub fn experiment_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, &[EXPERIMENT, index as u64])
}

pub fn sweep_point_seed(master_seed: u64, value_index: usize) -> u64 {
    derive_seed(master_seed, &[SWEEP_POINT, value_index as u64])
}

/// Where each experiment's starting population comes from. Every experiment
/// of a batch starts from the same population.
#[derive(Debug, Clone)]
pub enum PopulationSource {
    Agents(Vec<AgentState>),
    Profile(ProfileDocument),
    File(PathBuf),
}

impl PopulationSource {
    pub fn materialize(&self) -> Result<Vec<AgentState>> {
        let pop = match self {
            PopulationSource::Agents(a) => a.clone(),
            PopulationSource::Profile(doc) => doc.generate()?,
            PopulationSource::File(path) => load_population(path)?,
        };
        check_population(&pop)?;
        Ok(pop)
    }
}

/// Metrics of `reps` independent days from one starting population.
pub fn run_days(
    params: &ModelParams,
    population: &[AgentState],
    reps: usize,
    master_seed: u64,
    exec: Executor,
) -> Result<Vec<DayMetrics>> {
    params.validate()?;
    check_population(population)?;
    exec.try_map(reps, |i| {
        run_day(population, params, experiment_seed(master_seed, i)).map(|d| d.metrics)
    })
}

pub fn run_batch(
    params: &ModelParams,
    source: &PopulationSource,
    reps: usize,
    master_seed: u64,
    exec: Executor,
) -> Result<AggregateMetrics> {
    if reps == 0 {
        return Err(SimError::config("reps must be at least 1"));
    }
    params.validate()?;
    let population = source.materialize()?;
    aggregate(&run_days(params, &population, reps, master_seed, exec)?)
}

/// What a sweep varies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SweepAxis {
    /// A single named field of [`ModelParams`].
    Param(String),
    /// Width of the market price range around its current midpoint; both
    /// seller ranges are re-derived from it.
    MarketWidth,
    /// Midpoint of the market price range at constant width.
    MarketMidpoint,
}

impl SweepAxis {
    pub fn name(&self) -> &str {
        match self {
            SweepAxis::Param(p) => p,
            SweepAxis::MarketWidth => "market_width",
            SweepAxis::MarketMidpoint => "market_midpoint",
        }
    }

    /// `base` with this axis set to `value`, validated.
    pub fn apply(&self, base: &ModelParams, value: f64) -> Result<ModelParams> {
        let mut p = base.clone();
        match self {
            SweepAxis::Param(name) => p.set(name, value)?,
            SweepAxis::MarketWidth => {
                let mid = 0.5 * (base.market_lo + base.market_hi);
                p.set_market_range(mid - 0.5 * value, mid + 0.5 * value);
            }
            SweepAxis::MarketMidpoint => {
                let half = 0.5 * (base.market_hi - base.market_lo);
                p.set_market_range(value - half, value + half);
            }
        }
        p.validate()
            .map_err(|e| SimError::config(format!("{} = {value}: {e}", self.name())))?;
        Ok(p)
    }
}

impl FromStr for SweepAxis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "market_width" => Ok(SweepAxis::MarketWidth),
            "market_midpoint" => Ok(SweepAxis::MarketMidpoint),
            name if ModelParams::NAMES.contains(&name) => Ok(SweepAxis::Param(name.to_string())),
            other => Err(SimError::config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

impl TryFrom<String> for SweepAxis {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SweepAxis> for String {
    fn from(a: SweepAxis) -> String {
        a.name().to_string()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub reps: usize,
    pub base_params: ModelParams,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: AggregateMetrics,
}

/// One batch per value, in the order given. All values are checked before
/// anything runs.
pub fn run_sweep(spec: &SweepSpec, source: &PopulationSource, exec: Executor) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(SimError::config("sweep needs at least one value"));
    }
    if spec.reps == 0 {
        return Err(SimError::config("reps must be at least 1"));
    }
    let configs = spec
        .values
        .iter()
        .map(|&v| spec.axis.apply(&spec.base_params, v))
        .collect::<Result<Vec<_>>>()?;
    let population = source.materialize()?;
    configs
        .iter()
        .zip(&spec.values)
        .enumerate()
        .map(|(j, (params, &value))| {
            let days = run_days(
                params,
                &population,
                spec.reps,
                sweep_point_seed(spec.master_seed, j),
                exec,
            )?;
            Ok(SweepRow {
                value,
                metrics: aggregate(&days)?,
            })
        })
        .collect()
}
