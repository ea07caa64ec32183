//! Per-day liquidity metrics and their aggregation over repeated experiments.

use serde::{Deserialize, Serialize};

use crate::engine::DayTrace;
use crate::error::{Result, SimError};
use crate::model::{Money, OfferBook};

/// Counters for one simulated trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub n_offers: u64,
    pub n_trades: u64,
    pub offered_shares: u64,
    pub traded_shares: u64,
    pub traded_notional: Money,
    pub platform_revenue: Money,
    /// `traded_shares / offered_shares`; `None` when nothing was offered.
    pub liquidity_ratio: Option<f64>,
}

impl DayMetrics {
    pub fn empty() -> Self {
        DayMetrics {
            n_offers: 0,
            n_trades: 0,
            offered_shares: 0,
            traded_shares: 0,
            traded_notional: Money::ZERO,
            platform_revenue: Money::ZERO,
            liquidity_ratio: None,
        }
    }

    /// Recomputes the ratio from the share counters.
    pub(crate) fn refresh_ratio(&mut self) {
        self.liquidity_ratio = liquidity_ratio(self.traded_shares, self.offered_shares);
    }
}

pub fn liquidity_ratio(traded: u64, offered: u64) -> Option<f64> {
    (offered > 0).then(|| traded as f64 / offered as f64)
}

/// Metrics of a finished day from its trace and the book as it stood when
/// trading opened.
pub fn compute_day_metrics(trace: &DayTrace, book_initial: &OfferBook) -> Result<DayMetrics> {
    if trace.offers_entered.len() != book_initial.len() {
        return Err(SimError::contract(format!(
            "trace lists {} offers but the opening book holds {}",
            trace.offers_entered.len(),
            book_initial.len()
        )));
    }
    let mut m = DayMetrics {
        n_offers: book_initial.len() as u64,
        offered_shares: book_initial.total_quantity(),
        ..DayMetrics::empty()
    };
    for rec in &trace.fills {
        m.n_trades += 1;
        m.traded_shares += rec.fill.units;
        m.traded_notional += rec.fill.notional;
        m.platform_revenue += rec.fee;
    }
    if m.traded_shares > m.offered_shares {
        return Err(SimError::contract("more shares traded than offered"));
    }
    m.refresh_ratio();
    Ok(m)
}

/// Mean and sample standard deviation of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Summation runs over sorted values so the result does not depend on
    /// the order of the input.
    fn of(mut values: Vec<f64>) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std })
    }

    /// Standard error of the mean over `n` samples.
    pub fn std_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

/// Averages over a batch of days.
///
/// The liquidity ratio is the mean of per-day ratios over days where it is
/// defined, not the ratio of mean totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n_experiments: usize,
    /// Days excluded from the ratio mean because nothing was offered.
    pub n_ratio_undefined: usize,
    pub liquidity_ratio: Option<Stat>,
    pub n_offers: Stat,
    pub n_trades: Stat,
    pub offered_shares: Stat,
    pub traded_shares: Stat,
    pub traded_notional: Stat,
    pub platform_revenue: Stat,
}

impl AggregateMetrics {
    /// Mean liquidity ratio, NaN when no day had offers.
    pub fn mean_ratio(&self) -> f64 {
        self.liquidity_ratio.map_or(f64::NAN, |s| s.mean)
    }

    /// Flat `(name, mean)` record in a fixed field order.
    pub fn record(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("liquidity_ratio", self.mean_ratio()),
            ("n_offers", self.n_offers.mean),
            ("n_trades", self.n_trades.mean),
            ("offered_shares", self.offered_shares.mean),
            ("traded_shares", self.traded_shares.mean),
            ("traded_notional", self.traded_notional.mean),
            ("platform_revenue", self.platform_revenue.mean),
        ]
    }
}

pub fn aggregate(days: &[DayMetrics]) -> Result<AggregateMetrics> {
    if days.is_empty() {
        return Err(SimError::config("cannot aggregate an empty batch"));
    }
    let col = |f: &dyn Fn(&DayMetrics) -> f64| Stat::of(days.iter().map(f).collect()).expect("non-empty batch");
    let ratios: Vec<f64> = days.iter().filter_map(|d| d.liquidity_ratio).collect();
    let n_defined = ratios.len();
    Ok(AggregateMetrics {
        n_experiments: days.len(),
        n_ratio_undefined: days.len() - n_defined,
        liquidity_ratio: Stat::of(ratios),
        n_offers: col(&|d| d.n_offers as f64),
        n_trades: col(&|d| d.n_trades as f64),
        offered_shares: col(&|d| d.offered_shares as f64),
        traded_shares: col(&|d| d.traded_shares as f64),
        traded_notional: col(&|d| d.traded_notional.to_euros()),
        platform_revenue: col(&|d| d.platform_revenue.to_euros()),
    })
}
