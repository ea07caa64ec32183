//! Domain types shared by every part of the simulator: agents, offers, the
//! offer book and the model parameters.

use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Currency amount in integer micro-units (1e-6 EUR).
///
/// Balances are integers so that settlement conserves total cash exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);
    pub const UNITS_PER_EURO: i64 = 1_000_000;

    pub const fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    /// Nearest representable amount to `euros`.
    pub fn from_euros(euros: f64) -> Self {
        Money((euros * Self::UNITS_PER_EURO as f64).round() as i64)
    }

    pub fn to_euros(self) -> f64 {
        self.0 as f64 / Self::UNITS_PER_EURO as f64
    }

    /// `price * units`, rounded to the nearest micro-unit.
    pub fn notional(price: f64, units: u64) -> Self {
        Money((price * units as f64 * Self::UNITS_PER_EURO as f64).round() as i64)
    }

    /// `self * fraction`, rounded to the nearest micro-unit.
    pub fn scale(self, fraction: f64) -> Self {
        Money((self.0 as f64 * fraction).round() as i64)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let per = Self::UNITS_PER_EURO as u64;
        let whole = abs / per;
        let frac = abs % per;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

/// Dense index of an agent within one population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    PureSeller,
    PureBuyer,
    BuyerSeller,
}

impl AgentKind {
    /// Short label used in endowment files.
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::PureSeller => "PS",
            AgentKind::PureBuyer => "PB",
            AgentKind::BuyerSeller => "BS",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "PS" => Some(AgentKind::PureSeller),
            "PB" => Some(AgentKind::PureBuyer),
            "BS" => Some(AgentKind::BuyerSeller),
            _ => None,
        }
    }

    pub fn sells(self) -> bool {
        matches!(self, AgentKind::PureSeller | AgentKind::BuyerSeller)
    }

    pub fn buys(self) -> bool {
        matches!(self, AgentKind::PureBuyer | AgentKind::BuyerSeller)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub shares: u64,
    pub cash: Money,
}

impl AgentState {
    pub fn new(id: u32, kind: AgentKind, shares: u64, cash: Money) -> Self {
        AgentState {
            id: AgentId(id),
            kind,
            shares,
            cash,
        }
    }
}

/// A sell listing: `quantity` units at `price` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub price: f64,
    pub quantity: u64,
    pub seller: AgentId,
    /// Assigned by [`OfferBook::insert`].
    pub entry_order: u64,
}

impl Offer {
    pub fn new(price: f64, quantity: u64, seller: AgentId) -> Self {
        Offer {
            price,
            quantity,
            seller,
            entry_order: 0,
        }
    }
}

/// The one-sided book of live sell offers, kept in entry order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OfferBook {
    offers: Vec<Offer>,
    next_entry: u64,
}

impl OfferBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.offers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }

    pub fn offers(&self) -> &[Offer] {
        &self.offers
    }

    pub fn get(&self, position: usize) -> Option<&Offer> {
        self.offers.get(position)
    }

    pub fn offer_of(&self, seller: AgentId) -> Option<&Offer> {
        self.offers.iter().find(|o| o.seller == seller)
    }

    pub fn total_quantity(&self) -> u64 {
        self.offers.iter().map(|o| o.quantity).sum()
    }

    /// Appends `offer`, stamping it with the next entry number. Returns the stamp.
    pub fn insert(&mut self, mut offer: Offer) -> Result<u64> {
        if offer.quantity == 0 {
            return Err(SimError::contract(format!(
                "offer from agent {} has zero quantity",
                offer.seller
            )));
        }
        if !(offer.price.is_finite() && offer.price > 0.0) {
            return Err(SimError::contract(format!(
                "offer from agent {} has non-positive price {}",
                offer.seller, offer.price
            )));
        }
        if self.offer_of(offer.seller).is_some() {
            return Err(SimError::contract(format!(
                "agent {} already has a live offer",
                offer.seller
            )));
        }
        let stamp = self.next_entry;
        self.next_entry += 1;
        offer.entry_order = stamp;
        self.offers.push(offer);
        Ok(stamp)
    }

    /// Removes `units` from the seller's offer, deleting it once empty.
    /// Returns the remaining quantity.
    pub fn apply_fill(&mut self, seller: AgentId, units: u64) -> Result<u64> {
        let pos = self
            .offers
            .iter()
            .position(|o| o.seller == seller)
            .ok_or_else(|| SimError::contract(format!("agent {seller} has no live offer")))?;
        let offer = &mut self.offers[pos];
        if units == 0 || units > offer.quantity {
            return Err(SimError::contract(format!(
                "fill of {units} units against offer of {} from agent {seller}",
                offer.quantity
            )));
        }
        offer.quantity -= units;
        let remaining = offer.quantity;
        if remaining == 0 {
            self.offers.remove(pos);
        }
        Ok(remaining)
    }

    /// Drops every live offer (end of day).
    pub fn clear(&mut self) {
        self.offers.clear();
    }
}

/// All model parameters. Defaults are the baseline calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub p_ref: f64,
    pub k_pb: f64,
    pub ps_offer_prob: f64,
    pub ps_offer_ratio: f64,
    pub ps_price_lo: f64,
    pub ps_price_hi: f64,
    pub pb_trade_prob: f64,
    pub pb_purchase_ratio: f64,
    pub bs_offer_prob: f64,
    pub bs_offer_ratio: f64,
    pub bs_price_lo: f64,
    pub bs_price_hi: f64,
    pub bs_trade_prob: f64,
    pub bs_purchase_ratio: f64,
    pub bs_search_len: u32,
    pub market_lo: f64,
    pub market_hi: f64,
    pub n_trading_iters: u32,
    pub exit_fee_rate: f64,
    pub debit_exit_fee: bool,
}

/// Offset between the market range and each seller type's range.
pub const RANGE_OFFSET: f64 = 0.05;

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::baseline()
    }
}

impl ModelParams {
    pub fn baseline() -> Self {
        let mut p = ModelParams {
            p_ref: 50.0,
            k_pb: 2.0,
            ps_offer_prob: 0.114,
            ps_offer_ratio: 0.603,
            ps_price_lo: 0.0,
            ps_price_hi: 0.0,
            pb_trade_prob: 0.092,
            pb_purchase_ratio: 0.566,
            bs_offer_prob: 0.278,
            bs_offer_ratio: 0.333,
            bs_price_lo: 0.0,
            bs_price_hi: 0.0,
            bs_trade_prob: 0.104,
            bs_purchase_ratio: 0.485,
            bs_search_len: 5,
            market_lo: 0.75,
            market_hi: 1.10,
            n_trading_iters: 12,
            exit_fee_rate: 0.02,
            debit_exit_fee: false,
        };
        p.set_market_range(0.75, 1.10);
        p
    }

    /// Sets the market range and derives both seller ranges from it:
    /// PS gets `[lo, hi - 0.05]`, BS gets `[lo + 0.05, hi]`.
    pub fn set_market_range(&mut self, lo: f64, hi: f64) {
        self.market_lo = lo;
        self.market_hi = hi;
        self.ps_price_lo = lo;
        self.ps_price_hi = hi - RANGE_OFFSET;
        self.bs_price_lo = lo + RANGE_OFFSET;
        self.bs_price_hi = hi;
    }

    pub fn ps_price_range(&self) -> (f64, f64) {
        (self.ps_price_lo * self.p_ref, self.ps_price_hi * self.p_ref)
    }

    pub fn bs_price_range(&self) -> (f64, f64) {
        (self.bs_price_lo * self.p_ref, self.bs_price_hi * self.p_ref)
    }

    /// Checks every parameter. Price bounds may coincide (a degenerate,
    /// single-price range) but must not cross.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimError::config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        let range = |name: &str, lo: f64, hi: f64| {
            if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
                Err(SimError::config(format!(
                    "{name} range needs 0 < lo <= hi, got [{lo}, {hi}]"
                )))
            } else {
                Ok(())
            }
        };
        if !(self.p_ref.is_finite() && self.p_ref > 0.0) {
            return Err(SimError::config(format!("p_ref must be positive, got {}", self.p_ref)));
        }
        if !self.k_pb.is_finite() {
            return Err(SimError::config(format!("k_pb must be finite, got {}", self.k_pb)));
        }
        unit("ps_offer_prob", self.ps_offer_prob)?;
        unit("ps_offer_ratio", self.ps_offer_ratio)?;
        unit("pb_trade_prob", self.pb_trade_prob)?;
        unit("pb_purchase_ratio", self.pb_purchase_ratio)?;
        unit("bs_offer_prob", self.bs_offer_prob)?;
        unit("bs_offer_ratio", self.bs_offer_ratio)?;
        unit("bs_trade_prob", self.bs_trade_prob)?;
        unit("bs_purchase_ratio", self.bs_purchase_ratio)?;
        unit("exit_fee_rate", self.exit_fee_rate)?;
        range("ps_price", self.ps_price_lo, self.ps_price_hi)?;
        range("bs_price", self.bs_price_lo, self.bs_price_hi)?;
        range("market", self.market_lo, self.market_hi)?;
        if self.bs_search_len == 0 {
            return Err(SimError::config("bs_search_len must be at least 1"));
        }
        Ok(())
    }

    /// Names accepted by [`ModelParams::set`].
    pub const NAMES: &'static [&'static str] = &[
        "p_ref",
        "k_pb",
        "ps_offer_prob",
        "ps_offer_ratio",
        "ps_price_lo",
        "ps_price_hi",
        "pb_trade_prob",
        "pb_purchase_ratio",
        "bs_offer_prob",
        "bs_offer_ratio",
        "bs_price_lo",
        "bs_price_hi",
        "bs_trade_prob",
        "bs_purchase_ratio",
        "bs_search_len",
        "market_lo",
        "market_hi",
        "n_trading_iters",
        "exit_fee_rate",
    ];

    /// Sets one numeric parameter by name. Integer parameters must receive
    /// whole, non-negative values.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let whole = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(SimError::config(format!("{name} needs a whole number, got {v}")))
            }
        };
        match name {
            "p_ref" => self.p_ref = value,
            "k_pb" => self.k_pb = value,
            "ps_offer_prob" => self.ps_offer_prob = value,
            "ps_offer_ratio" => self.ps_offer_ratio = value,
            "ps_price_lo" => self.ps_price_lo = value,
            "ps_price_hi" => self.ps_price_hi = value,
            "pb_trade_prob" => self.pb_trade_prob = value,
            "pb_purchase_ratio" => self.pb_purchase_ratio = value,
            "bs_offer_prob" => self.bs_offer_prob = value,
            "bs_offer_ratio" => self.bs_offer_ratio = value,
            "bs_price_lo" => self.bs_price_lo = value,
            "bs_price_hi" => self.bs_price_hi = value,
            "bs_trade_prob" => self.bs_trade_prob = value,
            "bs_purchase_ratio" => self.bs_purchase_ratio = value,
            "bs_search_len" => self.bs_search_len = whole(value)?,
            "market_lo" => self.market_lo = value,
            "market_hi" => self.market_hi = value,
            "n_trading_iters" => self.n_trading_iters = whole(value)?,
            "exit_fee_rate" => self.exit_fee_rate = value,
            other => return Err(SimError::config(format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }
}
