//! Fits an [`EndowmentProfile`] to target day metrics by random search.
//!
//! The objective is `sum_m w_m * ((sim_m - target_m) / target_m)^2` over the
//! mean liquidity ratio, offers, trades, offered shares and traded shares,
//! where `sim_m` is the batch mean over `reps` day-runs. All candidates are
//! scored on the same experiment seeds so that differences between them are
//! not swamped by simulation noise.
//!
//! The budget is spent in two phases. The first `1 - refine_share` of it
//! samples candidates uniformly over the [`SearchSpace`]. The rest runs
//! [`REFINE_ROUNDS`] rounds that sample uniformly from a box around the
//! incumbent, shrinking it each round (Luus-Jaakola style). The
//! family of each distribution is fixed to the incumbent's during refinement.

use serde::{Deserialize, Serialize};

use crate::endowments::{CalibrationRecord, DistSpec, EndowmentProfile, ProfileDocument};
use crate::error::{Result, SimError};
use crate::exec::Executor;
use crate::experiments::run_days;
use crate::metrics::{aggregate, AggregateMetrics};
use crate::model::ModelParams;
use crate::rng::{derive_seed, SimRng};

const CANDIDATE: u64 = 0x4341_4e44; // "CAND"
const POPULATION: u64 = 0x504f_5055; // "POPU"
const EVALUATION: u64 = 0x4556_414c; // "EVAL"

pub const REFINE_ROUNDS: usize = 8;
/// Each refinement round shrinks the sampling box by this factor.
pub const SHRINK: f64 = 0.6;
/// Lower bound on experiments per candidate.
pub const MIN_REPS: usize = 200;

/// Metric values to match. Defaults are the baseline market's averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricTargets {
    pub liquidity_ratio: f64,
    pub n_offers: f64,
    pub n_trades: f64,
    pub offered_shares: f64,
    pub traded_shares: f64,
}

impl Default for MetricTargets {
    fn default() -> Self {
        MetricTargets {
            liquidity_ratio: 0.139,
            n_offers: 69.0,
            n_trades: 130.0,
            offered_shares: 4746.0,
            traded_shares: 614.28,
        }
    }
}

impl MetricTargets {
    fn as_array(&self) -> [f64; 5] {
        [
            self.liquidity_ratio,
            self.n_offers,
            self.n_trades,
            self.offered_shares,
            self.traded_shares,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|t| t.is_finite() && *t != 0.0) {
            Ok(())
        } else {
            Err(SimError::config(
                "calibration targets must be finite and non-zero (relative error is undefined otherwise)",
            ))
        }
    }

    /// The same five metrics taken from a batch.
    pub fn from_aggregate(agg: &AggregateMetrics) -> Self {
        MetricTargets {
            liquidity_ratio: agg.mean_ratio(),
            n_offers: agg.n_offers.mean,
            n_trades: agg.n_trades.mean,
            offered_shares: agg.offered_shares.mean,
            traded_shares: agg.traded_shares.mean,
        }
    }
}

/// Weights of the five objective terms, in [`MetricTargets`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricWeights {
    pub liquidity_ratio: f64,
    pub n_offers: f64,
    pub n_trades: f64,
    pub offered_shares: f64,
    pub traded_shares: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            liquidity_ratio: 1.0,
            n_offers: 1.0,
            n_trades: 1.0,
            offered_shares: 1.0,
            traded_shares: 1.0,
        }
    }
}

impl MetricWeights {
    fn as_array(&self) -> [f64; 5] {
        [
            self.liquidity_ratio,
            self.n_offers,
            self.n_trades,
            self.offered_shares,
            self.traded_shares,
        ]
    }
}

/// Weighted squared relative error of a batch against the targets.
/// A batch without a defined liquidity ratio scores infinity.
pub fn objective(agg: &AggregateMetrics, targets: &MetricTargets, weights: &MetricWeights) -> f64 {
    let sim = MetricTargets::from_aggregate(agg).as_array();
    let score: f64 = sim
        .iter()
        .zip(targets.as_array())
        .zip(weights.as_array())
        .map(|((s, t), w)| w * ((s - t) / t).powi(2))
        .sum();
    if score.is_nan() {
        f64::INFINITY
    } else {
        score
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        rng.uniform_in(self.0, self.1)
    }

    /// Box of relative size `scale` centred on `at`, clipped to `self`.
    fn around(&self, at: f64, scale: f64) -> Interval {
        let half = 0.5 * scale * (self.1 - self.0);
        Interval((at - half).max(self.0), (at + half).min(self.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LognormalRounded,
    ParetoRounded,
}

/// Parameter box for one distribution family: `(mu, sigma)` for lognormal,
/// `(scale, shape)` for Pareto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistBox {
    pub family: Family,
    pub first: Interval,
    pub second: Interval,
}

impl DistBox {
    fn build(&self, a: f64, b: f64) -> DistSpec {
        match self.family {
            Family::LognormalRounded => DistSpec::LognormalRounded { mu: a, sigma: b },
            Family::ParetoRounded => DistSpec::ParetoRounded { scale: a, shape: b },
        }
    }

    fn sample(&self, rng: &mut SimRng) -> DistSpec {
        let a = self.first.sample(rng);
        let b = self.second.sample(rng);
        self.build(a, b)
    }

    fn sample_near(&self, at: &DistSpec, scale: f64, rng: &mut SimRng) -> DistSpec {
        let (a, b) = match *at {
            DistSpec::LognormalRounded { mu, sigma } => (mu, sigma),
            DistSpec::ParetoRounded { scale, shape } => (scale, shape),
            _ => unreachable!("search space only produces lognormal and pareto"),
        };
        let a = self.first.around(a, scale).sample(rng);
        let b = self.second.around(b, scale).sample(rng);
        self.build(a, b)
    }

    fn matches(&self, spec: &DistSpec) -> bool {
        matches!(
            (self.family, spec),
            (Family::LognormalRounded, DistSpec::LognormalRounded { .. })
                | (Family::ParetoRounded, DistSpec::ParetoRounded { .. })
        )
    }
}

/// One dimension of the search: choose a family uniformly, then its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistChoice(pub Vec<DistBox>);

impl DistChoice {
    fn sample(&self, rng: &mut SimRng) -> DistSpec {
        let i = rng.index(self.0.len());
        self.0[i].sample(rng)
    }

    fn sample_near(&self, at: &DistSpec, scale: f64, rng: &mut SimRng) -> DistSpec {
        match self.0.iter().find(|b| b.matches(at)) {
            Some(b) => b.sample_near(at, scale, rng),
            None => self.sample(rng),
        }
    }
}

/// The documented parameter boxes the calibrator searches. Agent counts are
/// fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_pb: u32,
    pub n_ps: u32,
    pub n_bs: u32,
    pub ps_holder_frac: Interval,
    pub bs_holder_frac: Interval,
    pub share_ps: DistChoice,
    pub share_bs: DistChoice,
    pub cash_pb: DistChoice,
    pub cash_bs: DistChoice,
    pub cash_floor: Interval,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let both = |ln_mu, ln_sigma, p_scale, p_shape| {
            DistChoice(vec![
                DistBox {
                    family: Family::LognormalRounded,
                    first: ln_mu,
                    second: ln_sigma,
                },
                DistBox {
                    family: Family::ParetoRounded,
                    first: p_scale,
                    second: p_shape,
                },
            ])
        };
        SearchSpace {
            n_pb: 727,
            n_ps: 413,
            n_bs: 225,
            ps_holder_frac: Interval(0.35, 0.85),
            bs_holder_frac: Interval(0.55, 1.0),
            share_ps: both(
                Interval(2.0, 4.5),
                Interval(0.3, 2.0),
                Interval(1.0, 20.0),
                Interval(0.7, 2.5),
            ),
            share_bs: both(
                Interval(3.0, 6.0),
                Interval(0.3, 2.2),
                Interval(2.0, 60.0),
                Interval(0.7, 2.5),
            ),
            cash_pb: both(
                Interval(0.0, 6.0),
                Interval(0.5, 3.5),
                Interval(1.0, 60.0),
                Interval(0.3, 2.0),
            ),
            cash_bs: both(
                Interval(0.0, 7.0),
                Interval(0.5, 3.5),
                Interval(1.0, 100.0),
                Interval(0.3, 2.0),
            ),
            cash_floor: Interval(0.0, 0.0),
        }
    }
}

impl SearchSpace {
    pub fn sample(&self, rng: &mut SimRng) -> EndowmentProfile {
        EndowmentProfile {
            n_pb: self.n_pb,
            n_ps: self.n_ps,
            n_bs: self.n_bs,
            ps_holder_frac: self.ps_holder_frac.sample(rng),
            bs_holder_frac: self.bs_holder_frac.sample(rng),
            share_dist_ps: self.share_ps.sample(rng),
            share_dist_bs: self.share_bs.sample(rng),
            cash_dist_pb: self.cash_pb.sample(rng),
            cash_dist_bs: self.cash_bs.sample(rng),
            cash_floor: self.cash_floor.sample(rng),
        }
    }

    pub fn sample_near(&self, at: &EndowmentProfile, scale: f64, rng: &mut SimRng) -> EndowmentProfile {
        EndowmentProfile {
            n_pb: self.n_pb,
            n_ps: self.n_ps,
            n_bs: self.n_bs,
            ps_holder_frac: self.ps_holder_frac.around(at.ps_holder_frac, scale).sample(rng),
            bs_holder_frac: self.bs_holder_frac.around(at.bs_holder_frac, scale).sample(rng),
            share_dist_ps: self.share_ps.sample_near(&at.share_dist_ps, scale, rng),
            share_dist_bs: self.share_bs.sample_near(&at.share_dist_bs, scale, rng),
            cash_dist_pb: self.cash_pb.sample_near(&at.cash_dist_pb, scale, rng),
            cash_dist_bs: self.cash_bs.sample_near(&at.cash_dist_bs, scale, rng),
            cash_floor: self.cash_floor.around(at.cash_floor, scale).sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub targets: MetricTargets,
    pub weights: MetricWeights,
    pub space: SearchSpace,
    pub params: ModelParams,
    /// Number of candidate profiles evaluated.
    pub budget: usize,
    /// Experiments per candidate.
    pub reps: usize,
    pub seed: u64,
    /// Share of the budget spent refining around the incumbent.
    pub refine_share: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            targets: MetricTargets::default(),
            weights: MetricWeights::default(),
            space: SearchSpace::default(),
            params: ModelParams::baseline(),
            budget: 2000,
            reps: MIN_REPS,
            seed: 0,
            refine_share: 0.5,
        }
    }
}

/// A scored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub document: ProfileDocument,
    pub objective: f64,
    pub metrics: AggregateMetrics,
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub best: Candidate,
    pub evaluated: usize,
}

/// Scores `doc` on `reps` experiments with seeds derived from `eval_seed`.
pub fn evaluate(
    doc: &ProfileDocument,
    params: &ModelParams,
    reps: usize,
    eval_seed: u64,
    targets: &MetricTargets,
    weights: &MetricWeights,
    exec: Executor,
) -> Result<(f64, AggregateMetrics)> {
    let population = doc.generate()?;
    let agg = aggregate(&run_days(params, &population, reps, eval_seed, exec)?)?;
    Ok((objective(&agg, targets, weights), agg))
}

pub fn calibrate_profile(config: &CalibrationConfig, exec: Executor) -> Result<CalibrationOutcome> {
    config.targets.validate()?;
    config.params.validate()?;
    if config.budget == 0 {
        return Err(SimError::config("calibration budget must be at least 1"));
    }
    if config.reps < MIN_REPS {
        return Err(SimError::config(format!(
            "calibration needs at least {MIN_REPS} experiments per candidate, got {}",
            config.reps
        )));
    }
    if !(0.0..1.0).contains(&config.refine_share) {
        return Err(SimError::config("refine_share must lie in [0, 1)"));
    }
    let eval_seed = derive_seed(config.seed, &[EVALUATION]);
    let refine_total = (config.budget as f64 * config.refine_share).floor() as usize;
    let global = config.budget - refine_total;

    // candidates are scored one after another; each batch uses the executor
    let score = |index: usize, profile: EndowmentProfile| -> Result<Candidate> {
        let document = ProfileDocument {
            population_seed: derive_seed(config.seed, &[POPULATION, index as u64]),
            calibration: None,
            profile,
        };
        let (objective, metrics) = evaluate(
            &document,
            &config.params,
            config.reps,
            eval_seed,
            &config.targets,
            &config.weights,
            exec,
        )?;
        Ok(Candidate {
            index,
            document,
            objective,
            metrics,
        })
    };
    let better = |a: &Candidate, b: &Candidate| a.objective < b.objective;
    let candidate_rng = |index: usize| SimRng::seed_from_u64(derive_seed(config.seed, &[CANDIDATE, index as u64]));

    let mut best: Option<Candidate> = None;
    for index in 0..global {
        let profile = config.space.sample(&mut candidate_rng(index));
        let c = score(index, profile)?;
        if best.as_ref().is_none_or(|b| better(&c, b)) {
            best = Some(c);
        }
    }

    let mut index = global;
    let mut scale = 1.0;
    for round in 0..REFINE_ROUNDS {
        let size = refine_total / REFINE_ROUNDS + usize::from(round < refine_total % REFINE_ROUNDS);
        scale *= SHRINK;
        let centre = best.as_ref().expect("global phase ran").document.profile.clone();
        let mut round_best = best.clone().expect("global phase ran");
        for _ in 0..size {
            let profile = config.space.sample_near(&centre, scale, &mut candidate_rng(index));
            let c = score(index, profile)?;
            if better(&c, &round_best) {
                round_best = c;
            }
            index += 1;
        }
        best = Some(round_best);
    }

    let mut best = best.expect("budget is positive");
    best.document.calibration = Some(CalibrationRecord {
        seed: config.seed,
        budget: config.budget,
        reps: config.reps,
        objective: best.objective,
    });
    Ok(CalibrationOutcome {
        best,
        evaluated: config.budget,
    })
}
