//! One simulated trading day.
//!
//! Pre-trading is a single pass over all sellers in random order, building a
//! fresh offer book. Trading then runs `n_trading_iters` iterations; in each,
//! every buyer is visited once in a freshly shuffled order and any purchase is
//! settled before the next buyer acts. Offers still open at the end of the day
//! are discarded.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::{bs_buy_decide, bs_offer_decide, pb_decide, ps_decide, settle_fill, TradeFill};
use crate::error::{Result, SimError};
use crate::metrics::{compute_day_metrics, DayMetrics};
use crate::model::{AgentKind, AgentState, ModelParams, Money, Offer, OfferBook};
use crate::rng::SimRng;

/// A settled fill and the trading iteration (1-based) it happened in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub iteration: u32,
    pub fill: TradeFill,
    pub fee: Money,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DayTrace {
    /// The opening book, in entry order.
    pub offers_entered: Vec<Offer>,
    pub fills: Vec<FillRecord>,
    /// Cumulative metrics after each trading iteration.
    pub per_iteration_metrics: Vec<DayMetrics>,
}

/// Everything a day-run produces.
#[derive(Debug, Clone)]
pub struct DayOutcome {
    pub trace: DayTrace,
    pub metrics: DayMetrics,
    pub population: Vec<AgentState>,
}

/// Population must be indexed by agent id.
pub fn check_population(population: &[AgentState]) -> Result<()> {
    for (i, a) in population.iter().enumerate() {
        if a.id.index() != i {
            return Err(SimError::config(format!(
                "agent at position {i} carries id {}; ids must be dense and in order",
                a.id
            )));
        }
        if a.cash.is_negative() {
            return Err(SimError::config(format!("agent {i} has negative cash")));
        }
    }
    Ok(())
}

fn indices_where(population: &[AgentState], pred: impl Fn(AgentKind) -> bool) -> Vec<usize> {
    population
        .iter()
        .enumerate()
        .filter(|(_, a)| pred(a.kind))
        .map(|(i, _)| i)
        .collect()
}

pub fn run_pretrading(population: &[AgentState], params: &ModelParams, rng: &mut SimRng) -> Result<OfferBook> {
    let mut order = indices_where(population, AgentKind::sells);
    rng.shuffle(&mut order);
    let mut book = OfferBook::new();
    for i in order {
        let agent = &population[i];
        let offer = match agent.kind {
            AgentKind::PureSeller => ps_decide(agent, params, rng),
            AgentKind::BuyerSeller => bs_offer_decide(agent, params, rng),
            AgentKind::PureBuyer => unreachable!("buyers do not post offers"),
        };
        if let Some(offer) = offer {
            book.insert(offer)?;
        }
    }
    Ok(book)
}

fn pair_mut(items: &mut [AgentState], a: usize, b: usize) -> (&mut AgentState, &mut AgentState) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = items.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

pub fn run_trading(
    population: &mut [AgentState],
    book: &mut OfferBook,
    params: &ModelParams,
    rng: &mut SimRng,
) -> Result<DayTrace> {
    let mut trace = DayTrace {
        offers_entered: book.offers().to_vec(),
        ..DayTrace::default()
    };
    let mut running = DayMetrics {
        n_offers: book.len() as u64,
        offered_shares: book.total_quantity(),
        ..DayMetrics::empty()
    };
    let mut order = indices_where(population, AgentKind::buys);
    for iteration in 1..=params.n_trading_iters {
        rng.shuffle(&mut order);
        for &i in &order {
            let agent = &population[i];
            let fill = match agent.kind {
                AgentKind::PureBuyer => pb_decide(agent, book, params, rng),
                AgentKind::BuyerSeller => bs_buy_decide(agent, book, params, rng),
                AgentKind::PureSeller => unreachable!("pure sellers do not buy"),
            };
            let Some(fill) = fill else { continue };
            let (buyer, seller) = pair_mut(population, i, fill.seller.index());
            let fee = settle_fill(&fill, buyer, seller, book, params)?;
            running.n_trades += 1;
            running.traded_shares += fill.units;
            running.traded_notional += fill.notional;
            running.platform_revenue += fee;
            trace.fills.push(FillRecord { iteration, fill, fee });
        }
        running.refresh_ratio();
        trace.per_iteration_metrics.push(running.clone());
    }
    Ok(trace)
}

/// Runs one full day on a copy of `population` with a stream seeded by `seed`.
pub fn run_day(population: &[AgentState], params: &ModelParams, seed: u64) -> Result<DayOutcome> {
    params.validate()?;
    check_population(population)?;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut agents = population.to_vec();
    let mut book = run_pretrading(&agents, params, &mut rng)?;
    let opening = book.clone();
    let trace = run_trading(&mut agents, &mut book, params, &mut rng)?;
    let metrics = compute_day_metrics(&trace, &opening)?;
    // unmatched offers expire with the day
    book.clear();
    Ok(DayOutcome {
        trace,
        metrics,
        population: agents,
    })
}

/// Re-applies a trace's fills to `initial`, checking each against the
/// rebuilt book. Returns the resulting balances.
pub fn replay(initial: &[AgentState], trace: &DayTrace, params: &ModelParams) -> Result<Vec<AgentState>> {
    let mut agents = initial.to_vec();
    let mut book = OfferBook::new();
    for offer in &trace.offers_entered {
        let stamp = book.insert(Offer::new(offer.price, offer.quantity, offer.seller))?;
        if stamp != offer.entry_order {
            return Err(SimError::contract("trace offers are not in entry order"));
        }
    }
    for rec in &trace.fills {
        let (b, s) = (rec.fill.buyer.index(), rec.fill.seller.index());
        if b >= agents.len() || s >= agents.len() || b == s {
            return Err(SimError::contract(format!("fill {b} <- {s} names unknown agents")));
        }
        let (buyer, seller) = pair_mut(&mut agents, b, s);
        let fee = settle_fill(&rec.fill, buyer, seller, &mut book, params)?;
        if fee != rec.fee {
            return Err(SimError::contract("replayed fee differs from the trace"));
        }
    }
    Ok(agents)
}

#[derive(Serialize)]
struct TraceLine {
    iteration: u32,
    buyer: u32,
    seller: u32,
    price: f64,
    units: u64,
    notional: f64,
}

/// Writes one JSON object per fill, one per line.
pub fn write_trace_jsonl(trace: &DayTrace, mut out: impl Write) -> std::io::Result<()> {
    for rec in &trace.fills {
        let line = TraceLine {
            iteration: rec.iteration,
            buyer: rec.fill.buyer.0,
            seller: rec.fill.seller.0,
            price: rec.fill.price,
            units: rec.fill.units,
            notional: rec.fill.notional.to_euros(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AgentId;

    fn pop(spec: &[(AgentKind, u64, f64)]) -> Vec<AgentState> {
        spec.iter()
            .enumerate()
            .map(|(i, &(k, s, c))| AgentState::new(i as u32, k, s, Money::from_euros(c)))
            .collect()
    }

    fn certain() -> ModelParams {
        let mut p = ModelParams::baseline();
        p.ps_offer_prob = 1.0;
        p.bs_offer_prob = 1.0;
        p.pb_trade_prob = 1.0;
        p.bs_trade_prob = 1.0;
        p
    }

    #[test]
    fn only_buyers_means_empty_book() {
        let agents = pop(&[(AgentKind::PureBuyer, 0, 100.0); 5]);
        let mut rng = SimRng::seed_from_u64(0);
        assert!(run_pretrading(&agents, &certain(), &mut rng).unwrap().is_empty());
    }

    #[test]
    fn certain_sellers_each_post_one_offer() {
        let mut spec = vec![(AgentKind::PureSeller, 10, 0.0); 4];
        spec.extend([(AgentKind::BuyerSeller, 9, 50.0); 3]);
        spec.push((AgentKind::PureBuyer, 0, 10.0));
        let agents = pop(&spec);
        let mut rng = SimRng::seed_from_u64(1);
        let book = run_pretrading(&agents, &certain(), &mut rng).unwrap();
        assert_eq!(book.len(), 7);
        for a in agents.iter().filter(|a| a.kind.sells()) {
            assert!(book.offer_of(a.id).is_some());
        }
    }

    #[test]
    fn no_buying_leaves_book_untouched() {
        let mut p = certain();
        p.pb_trade_prob = 0.0;
        p.bs_trade_prob = 0.0;
        let agents = pop(&[
            (AgentKind::PureSeller, 10, 0.0),
            (AgentKind::BuyerSeller, 9, 500.0),
            (AgentKind::PureBuyer, 0, 500.0),
        ]);
        let mut rng = SimRng::seed_from_u64(2);
        let mut book = run_pretrading(&agents, &p, &mut rng).unwrap();
        let opening = book.clone();
        let mut live = agents.clone();
        let trace = run_trading(&mut live, &mut book, &p, &mut rng).unwrap();
        assert!(trace.fills.is_empty());
        assert_eq!(book, opening);
        assert_eq!(trace.per_iteration_metrics.len(), 12);
    }

    #[test]
    fn single_unit_offer_is_consumed_once() {
        let mut p = certain();
        p.set_market_range(0.5, 0.55);
        let mut spec = vec![(AgentKind::PureSeller, 2, 0.0)];
        spec.extend([(AgentKind::PureBuyer, 0, 1000.0); 6]);
        let agents = pop(&spec);
        let out = run_day(&agents, &p, 3).unwrap();
        assert_eq!(out.trace.offers_entered.len(), 1);
        assert_eq!(out.trace.fills.len(), 1);
        assert_eq!(out.trace.fills[0].iteration, 1);
        assert_eq!(out.metrics.traded_shares, 1);
        assert_eq!(out.metrics.liquidity_ratio, Some(1.0));
    }

    #[test]
    fn same_seed_same_trace() {
        let mut spec = vec![(AgentKind::PureSeller, 30, 0.0); 20];
        spec.extend([(AgentKind::BuyerSeller, 40, 800.0); 20]);
        spec.extend([(AgentKind::PureBuyer, 0, 300.0); 40]);
        let agents = pop(&spec);
        let p = ModelParams::baseline();
        let a = run_day(&agents, &p, 99).unwrap();
        let b = run_day(&agents, &p, 99).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.population, b.population);
        let replayed = replay(&agents, &a.trace, &p).unwrap();
        assert_eq!(replayed, a.population);
    }

    #[test]
    fn empty_population_has_undefined_ratio() {
        let out = run_day(&[], &ModelParams::baseline(), 0).unwrap();
        assert_eq!(out.metrics, DayMetrics::empty());
    }

    #[test]
    fn invalid_params_fail_before_simulating() {
        let mut p = ModelParams::baseline();
        p.bs_trade_prob = -0.1;
        assert!(matches!(run_day(&[], &p, 0), Err(SimError::Config(_))));
    }

    #[test]
    fn non_dense_ids_rejected() {
        let mut agents = pop(&[(AgentKind::PureBuyer, 0, 1.0); 2]);
        agents[1].id = AgentId(5);
        assert!(run_day(&agents, &ModelParams::baseline(), 0).is_err());
    }

    #[test]
    fn trace_lines_are_json() {
        let mut p = certain();
        p.set_market_range(0.5, 0.55);
        let agents = pop(&[(AgentKind::PureSeller, 4, 0.0), (AgentKind::PureBuyer, 0, 1000.0)]);
        let out = run_day(&agents, &p, 5).unwrap();
        let mut buf = Vec::new();
        write_trace_jsonl(&out.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), out.trace.fills.len());
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        for key in ["iteration", "buyer", "seller", "price", "units", "notional"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
