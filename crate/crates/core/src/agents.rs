//! Decision rules for the three agent types and fill settlement.
//!
//! Sellers (pure sellers and buyer-sellers) act once before trading opens and
//! may post a single offer. Buyers act during trading: a pure buyer looks at
//! one random offer and accepts it with a sigmoid probability in price, a
//! buyer-seller samples a few sub-reference-price offers from other agents and
//! takes the cheapest. Both spend at most a fixed fraction of their cash.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{AgentId, AgentKind, AgentState, ModelParams, Money, Offer, OfferBook};
use crate::rng::SimRng;

/// Largest magnitude passed to `exp` in [`pb_accept_prob`].
pub const SIGMOID_CLAMP: f64 = 500.0;

/// A matched purchase, before settlement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeFill {
    pub buyer: AgentId,
    pub seller: AgentId,
    pub price: f64,
    pub units: u64,
    pub notional: Money,
    /// The spending limit the buyer computed for this purchase.
    pub purchase_budget: Money,
}

fn offer_decision(agent: &AgentState, prob: f64, ratio: f64, (lo, hi): (f64, f64), rng: &mut SimRng) -> Option<Offer> {
    let activated = rng.uniform() < prob;
    if !activated || agent.shares == 0 {
        return None;
    }
    let quantity = (ratio * agent.shares as f64).floor() as u64;
    if quantity == 0 {
        return None;
    }
    let price = rng.uniform_in(lo, hi);
    Some(Offer::new(price, quantity, agent.id))
}

/// Pure seller's pre-trading decision.
pub fn ps_decide(agent: &AgentState, params: &ModelParams, rng: &mut SimRng) -> Option<Offer> {
    debug_assert_eq!(agent.kind, AgentKind::PureSeller);
    offer_decision(
        agent,
        params.ps_offer_prob,
        params.ps_offer_ratio,
        params.ps_price_range(),
        rng,
    )
}

/// Buyer-seller's pre-trading decision.
pub fn bs_offer_decide(agent: &AgentState, params: &ModelParams, rng: &mut SimRng) -> Option<Offer> {
    debug_assert_eq!(agent.kind, AgentKind::BuyerSeller);
    offer_decision(
        agent,
        params.bs_offer_prob,
        params.bs_offer_ratio,
        params.bs_price_range(),
        rng,
    )
}

/// Probability that a pure buyer accepts an offer at `price`:
/// `1 / (1 + exp(k * (price - p_ref)))`.
pub fn pb_accept_prob(price: f64, params: &ModelParams) -> f64 {
    let x = (params.k_pb * (price - params.p_ref)).clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + x.exp())
}

/// Sizes a purchase of `offer` by a buyer holding `cash` who spends at most
/// `ratio * cash`. `None` when not even one unit is affordable.
pub fn size_purchase(buyer: &AgentState, offer: &Offer, ratio: f64) -> Option<TradeFill> {
    let budget = buyer.cash.scale(ratio).min(buyer.cash);
    let full = Money::notional(offer.price, offer.quantity);
    let units = if budget >= full {
        offer.quantity
    } else {
        let mut n = ((budget.to_euros() / offer.price).floor() as u64).min(offer.quantity);
        while n > 0 && Money::notional(offer.price, n) > budget {
            n -= 1;
        }
        n
    };
    if units == 0 {
        return None;
    }
    Some(TradeFill {
        buyer: buyer.id,
        seller: offer.seller,
        price: offer.price,
        units,
        notional: Money::notional(offer.price, units),
        purchase_budget: budget,
    })
}

/// Pure buyer's action in one trading iteration.
pub fn pb_decide(agent: &AgentState, book: &OfferBook, params: &ModelParams, rng: &mut SimRng) -> Option<TradeFill> {
    debug_assert_eq!(agent.kind, AgentKind::PureBuyer);
    if rng.uniform() >= params.pb_trade_prob || book.is_empty() {
        return None;
    }
    let offer = &book.offers()[rng.index(book.len())];
    if rng.uniform() >= pb_accept_prob(offer.price, params) {
        return None;
    }
    size_purchase(agent, offer, params.pb_purchase_ratio)
}

/// Buyer-seller's action in one trading iteration.
///
/// Candidates are other agents' offers priced strictly below `p_ref`. Up to
/// `bs_search_len` of them are sampled without replacement and the cheapest
/// is taken, earlier entries winning ties.
pub fn bs_buy_decide(
    agent: &AgentState,
    book: &OfferBook,
    params: &ModelParams,
    rng: &mut SimRng,
) -> Option<TradeFill> {
    debug_assert_eq!(agent.kind, AgentKind::BuyerSeller);
    if rng.uniform() >= params.bs_trade_prob {
        return None;
    }
    let candidates: Vec<&Offer> = book
        .offers()
        .iter()
        .filter(|o| o.price < params.p_ref && o.seller != agent.id)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let best = rng
        .sample_indices(candidates.len(), params.bs_search_len as usize)
        .into_iter()
        .map(|i| candidates[i])
        .min_by(|a, b| a.price.total_cmp(&b.price).then(a.entry_order.cmp(&b.entry_order)))?;
    size_purchase(agent, best, params.bs_purchase_ratio)
}

/// Checks `fill` against the current book and balances without mutating anything.
pub fn check_fill(fill: &TradeFill, buyer: &AgentState, seller: &AgentState, book: &OfferBook) -> Result<()> {
    let fail = |msg: String| Err(SimError::contract(msg));
    if fill.buyer != buyer.id || fill.seller != seller.id {
        return fail(format!(
            "fill {} <- {} applied to agents {} and {}",
            fill.buyer, fill.seller, buyer.id, seller.id
        ));
    }
    if buyer.id == seller.id {
        return fail(format!("agent {} cannot buy its own offer", buyer.id));
    }
    if !buyer.kind.buys() || !seller.kind.sells() {
        return fail(format!(
            "{:?} {} cannot buy from {:?} {}",
            buyer.kind, buyer.id, seller.kind, seller.id
        ));
    }
    let Some(offer) = book.offer_of(fill.seller) else {
        return fail(format!("agent {} has no live offer", fill.seller));
    };
    if offer.price.to_bits() != fill.price.to_bits() {
        return fail(format!(
            "fill price {} differs from offer price {}",
            fill.price, offer.price
        ));
    }
    if fill.units == 0 || fill.units > offer.quantity {
        return fail(format!(
            "fill of {} units against offer of {}",
            fill.units, offer.quantity
        ));
    }
    if fill.notional != Money::notional(fill.price, fill.units) {
        return fail(format!("fill notional {} does not match price x units", fill.notional));
    }
    if fill.notional > buyer.cash {
        return fail(format!("buyer {} cannot pay {}", buyer.id, fill.notional));
    }
    if fill.units > seller.shares {
        return fail(format!("seller {} holds fewer than {} shares", seller.id, fill.units));
    }
    Ok(())
}

/// Applies a fill to both balances and the book. Returns the exit-fee revenue,
/// `exit_fee_rate * notional`, which is reported whether or not it is debited
/// from the seller.
pub fn settle_fill(
    fill: &TradeFill,
    buyer: &mut AgentState,
    seller: &mut AgentState,
    book: &mut OfferBook,
    params: &ModelParams,
) -> Result<Money> {
    check_fill(fill, buyer, seller, book)?;
    let fee = fill.notional.scale(params.exit_fee_rate);
    book.apply_fill(fill.seller, fill.units)?;
    buyer.shares += fill.units;
    buyer.cash -= fill.notional;
    seller.shares -= fill.units;
    seller.cash += fill.notional;
    if params.debit_exit_fee {
        seller.cash -= fee;
    }
    Ok(fee)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: u32, kind: AgentKind, shares: u64, cash: f64) -> AgentState {
        AgentState::new(id, kind, shares, Money::from_euros(cash))
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
    fn ps_without_shares_never_offers() {
        let mut rng = SimRng::seed_from_u64(0);
        let a = agent(0, AgentKind::PureSeller, 0, 0.0);
        for _ in 0..100 {
            assert!(ps_decide(&a, &certain(), &mut rng).is_none());
        }
    }

    #[test]
    fn ps_offer_quantity_and_price_range() {
        let mut rng = SimRng::seed_from_u64(1);
        let a = agent(3, AgentKind::PureSeller, 10, 0.0);
        for _ in 0..1000 {
            let o = ps_decide(&a, &certain(), &mut rng).unwrap();
            assert_eq!(o.quantity, 6);
            assert_eq!(o.seller, AgentId(3));
            assert!((37.5..52.5).contains(&o.price));
        }
    }

    #[test]
    fn ps_single_share_floors_to_nothing() {
        let mut rng = SimRng::seed_from_u64(2);
        let a = agent(0, AgentKind::PureSeller, 1, 0.0);
        assert!(ps_decide(&a, &certain(), &mut rng).is_none());
    }

    #[test]
    fn bs_offer_quantity_and_range() {
        let mut rng = SimRng::seed_from_u64(3);
        let a = agent(5, AgentKind::BuyerSeller, 9, 100.0);
        for _ in 0..1000 {
            let o = bs_offer_decide(&a, &certain(), &mut rng).unwrap();
            assert_eq!(o.quantity, 2);
            assert_eq!(o.seller, AgentId(5));
            assert!((40.0..55.0).contains(&o.price));
        }
        let zero = agent(6, AgentKind::BuyerSeller, 0, 100.0);
        assert!(bs_offer_decide(&zero, &certain(), &mut rng).is_none());
        let mut never = certain();
        never.bs_offer_prob = 0.0;
        assert!(bs_offer_decide(&a, &never, &mut rng).is_none());
    }

    #[test]
    fn sigmoid_values() {
        let p = ModelParams::baseline();
        assert_eq!(pb_accept_prob(50.0, &p), 0.5);
        assert!((pb_accept_prob(49.0, &p) - 0.880_797_077_977_882_4).abs() < 1e-12);
        assert!((pb_accept_prob(55.0, &p) - 4.539_786_870_243_439e-5).abs() < 1e-15);
        let mut steep = p.clone();
        steep.k_pb = 1e6;
        assert_eq!(pb_accept_prob(60.0, &steep), 1.0 / (1.0 + 500f64.exp()));
        assert_eq!(pb_accept_prob(40.0, &steep), 1.0 / (1.0 + (-500f64).exp()));
    }

    #[test]
    fn pb_partial_purchase_limited_by_budget() {
        let buyer = agent(0, AgentKind::PureBuyer, 0, 100.0);
        let offer = Offer::new(50.0, 3, AgentId(1));
        let fill = size_purchase(&buyer, &offer, 0.566).unwrap();
        assert_eq!(fill.purchase_budget, Money::from_euros(56.6));
        assert_eq!(fill.units, 1);
        assert_eq!(fill.notional, Money::from_euros(50.0));
    }

    #[test]
    fn pb_full_purchase_when_affordable() {
        let buyer = agent(0, AgentKind::PureBuyer, 0, 100.0);
        let offer = Offer::new(40.0, 1, AgentId(1));
        let fill = size_purchase(&buyer, &offer, 0.566).unwrap();
        assert_eq!(fill.units, 1);
        assert_eq!(fill.notional, Money::from_euros(40.0));
    }

    #[test]
    fn pb_insufficient_funds() {
        let buyer = agent(0, AgentKind::PureBuyer, 0, 50.0);
        let offer = Offer::new(40.0, 1, AgentId(1));
        assert!(size_purchase(&buyer, &offer, 0.566).is_none());
    }

    #[test]
    fn pb_on_empty_book_does_nothing() {
        let mut rng = SimRng::seed_from_u64(4);
        let buyer = agent(0, AgentKind::PureBuyer, 0, 1000.0);
        assert!(pb_decide(&buyer, &OfferBook::new(), &certain(), &mut rng).is_none());
    }

    #[test]
    fn bs_ignores_offers_at_or_above_reference() {
        let mut rng = SimRng::seed_from_u64(5);
        let mut book = OfferBook::new();
        book.insert(Offer::new(50.0, 3, AgentId(1))).unwrap();
        book.insert(Offer::new(53.0, 3, AgentId(2))).unwrap();
        let bs = agent(0, AgentKind::BuyerSeller, 0, 1000.0);
        assert!(bs_buy_decide(&bs, &book, &certain(), &mut rng).is_none());
    }

    #[test]
    fn bs_never_buys_own_offer() {
        let mut rng = SimRng::seed_from_u64(6);
        let mut book = OfferBook::new();
        book.insert(Offer::new(41.0, 3, AgentId(0))).unwrap();
        let bs = agent(0, AgentKind::BuyerSeller, 5, 1000.0);
        assert!(bs_buy_decide(&bs, &book, &certain(), &mut rng).is_none());
    }

    #[test]
    fn bs_takes_cheapest_of_sample() {
        let mut rng = SimRng::seed_from_u64(7);
        let mut book = OfferBook::new();
        book.insert(Offer::new(48.0, 1, AgentId(1))).unwrap();
        book.insert(Offer::new(49.5, 1, AgentId(2))).unwrap();
        book.insert(Offer::new(45.0, 1, AgentId(3))).unwrap();
        let bs = agent(0, AgentKind::BuyerSeller, 0, 1000.0);
        let fill = bs_buy_decide(&bs, &book, &certain(), &mut rng).unwrap();
        assert_eq!(fill.price, 45.0);
        assert_eq!(fill.seller, AgentId(3));
    }

    #[test]
    fn bs_tie_goes_to_earlier_entry() {
        let mut rng = SimRng::seed_from_u64(8);
        let mut book = OfferBook::new();
        book.insert(Offer::new(45.0, 1, AgentId(2))).unwrap();
        book.insert(Offer::new(45.0, 1, AgentId(1))).unwrap();
        let bs = agent(0, AgentKind::BuyerSeller, 0, 1000.0);
        let fill = bs_buy_decide(&bs, &book, &certain(), &mut rng).unwrap();
        assert_eq!(fill.seller, AgentId(2));
    }

    #[test]
    fn settle_moves_shares_and_cash() {
        let p = ModelParams::baseline();
        let mut buyer = agent(0, AgentKind::PureBuyer, 0, 200.0);
        let mut seller = agent(1, AgentKind::PureSeller, 10, 0.0);
        let mut book = OfferBook::new();
        book.insert(Offer::new(50.0, 6, AgentId(1))).unwrap();
        let fill = size_purchase(&buyer, book.offer_of(AgentId(1)).unwrap(), 0.5).unwrap();
        assert_eq!(fill.units, 2);
        let revenue = settle_fill(&fill, &mut buyer, &mut seller, &mut book, &p).unwrap();
        assert_eq!(revenue, Money::from_euros(2.0));
        assert_eq!((buyer.shares, buyer.cash), (2, Money::from_euros(100.0)));
        assert_eq!((seller.shares, seller.cash), (8, Money::from_euros(100.0)));
        assert_eq!(book.offer_of(AgentId(1)).unwrap().quantity, 4);
    }

    #[test]
    fn settle_debits_fee_when_enabled() {
        let mut p = ModelParams::baseline();
        p.debit_exit_fee = true;
        let mut buyer = agent(0, AgentKind::PureBuyer, 0, 200.0);
        let mut seller = agent(1, AgentKind::PureSeller, 10, 0.0);
        let mut book = OfferBook::new();
        book.insert(Offer::new(50.0, 2, AgentId(1))).unwrap();
        let fill = size_purchase(&buyer, book.offer_of(AgentId(1)).unwrap(), 1.0).unwrap();
        let revenue = settle_fill(&fill, &mut buyer, &mut seller, &mut book, &p).unwrap();
        assert_eq!(revenue, Money::from_euros(2.0));
        assert_eq!(seller.cash, Money::from_euros(98.0));
        assert!(book.is_empty());
    }

    #[test]
    fn revenue_scale_matches_fee_rate() {
        // 246 shares at 50 with a 2% fee
        let notional = Money::notional(50.0, 246);
        assert_eq!(notional.scale(0.02), Money::from_euros(246.0));
    }

    #[test]
    fn inconsistent_fill_rejected_without_side_effects() {
        let p = ModelParams::baseline();
        let mut buyer = agent(0, AgentKind::PureBuyer, 0, 200.0);
        let mut seller = agent(1, AgentKind::PureSeller, 10, 0.0);
        let mut book = OfferBook::new();
        book.insert(Offer::new(50.0, 2, AgentId(1))).unwrap();
        let mut fill = size_purchase(&buyer, book.offer_of(AgentId(1)).unwrap(), 1.0).unwrap();
        fill.units = 3;
        fill.notional = Money::notional(50.0, 3);
        assert!(settle_fill(&fill, &mut buyer, &mut seller, &mut book, &p).is_err());
        fill.units = 1;
        fill.notional = Money::notional(50.0, 1);
        fill.price = 49.0;
        assert!(settle_fill(&fill, &mut buyer, &mut seller, &mut book, &p).is_err());
        assert_eq!(buyer.cash, Money::from_euros(200.0));
        assert_eq!(book.total_quantity(), 2);
    }
}
