//! Agent-based simulator of an illiquid secondary market for fractional
//! asset shares, where sellers post offers before trading opens and buyers
//! can only accept them.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: agents, offers, the offer book and parameters
//! - [`agents`]: the three decision rules and fill settlement
//! - [`engine`]: one trading day
//! - [`metrics`]: per-day liquidity metrics and batch aggregation
//! - [`endowments`]: endowment files and synthetic population profiles
//! - [`calibration`]: random search for a profile matching target metrics
//! - [`experiments`]: repeated experiments and parameter sweeps
//! - [`report`]: CSV / JSON emission

pub mod agents;
pub mod calibration;
pub mod endowments;
pub mod engine;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;

pub use error::{Result, SimError};
pub use exec::Executor;
pub use model::{AgentId, AgentKind, AgentState, ModelParams, Money, Offer, OfferBook};
