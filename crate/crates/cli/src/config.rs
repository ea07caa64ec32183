//! Configuration file. Every section is optional; anything left out takes
//! the baseline value. Relative paths are resolved against the file's
//! directory.
//!
//! ```toml
//! seed = 7
//! reps = 1000
//!
//! [params]
//! pb_trade_prob = 0.12
//! market_lo = 0.8        # seller ranges follow unless set explicitly
//!
//! [population]
//! profile = "profile.toml"   # or: endowments = "agents.csv"
//!
//! [sweep]
//! param = "k_pb"
//! values = [0.5, 1.5, 2.5]
//!
//! [calibrate]
//! budget = 2000
//! targets = { liquidity_ratio = 0.139, n_offers = 69.0, n_trades = 130.0, offered_shares = 4746.0, traded_shares = 614.28 }
//! ```

use std::path::{Path, PathBuf};

use fracsim_core::calibration::{MetricTargets, MetricWeights, SearchSpace};
use fracsim_core::ModelParams;
use serde::Deserialize;

use crate::{Failure, Format};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub jobs: Option<usize>,
    pub format: Option<Format>,
    pub params: Option<toml::Table>,
    pub population: PopulationSection,
    pub sweep: SweepSection,
    pub calibrate: CalibrateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub profile: Option<PathBuf>,
    pub endowments: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub param: Option<String>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub budget: Option<usize>,
    /// Experiments per candidate; the global `reps` does not apply here.
    pub reps: Option<usize>,
    pub refine_share: Option<f64>,
    pub targets: Option<MetricTargets>,
    pub weights: Option<MetricWeights>,
    pub space: Option<SearchSpace>,
}

const SELLER_RANGES: [&str; 4] = ["ps_price_lo", "ps_price_hi", "bs_price_lo", "bs_price_hi"];

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut cfg.population.profile);
        resolve(&mut cfg.population.endowments);
        Ok(cfg)
    }

    /// Baseline parameters overlaid with the `[params]` table. Setting the
    /// market range re-derives both seller ranges unless those are given too.
    pub fn params(&self) -> Result<ModelParams, Failure> {
        let Some(table) = &self.params else {
            return Ok(ModelParams::baseline());
        };
        let mut p: ModelParams = table
            .clone()
            .try_into()
            .map_err(|e| Failure::config(format!("[params]: {e}")))?;
        let touches_market = table.contains_key("market_lo") || table.contains_key("market_hi");
        let explicit_ranges = SELLER_RANGES.iter().any(|k| table.contains_key(*k));
        if touches_market && !explicit_ranges {
            let (lo, hi) = (p.market_lo, p.market_hi);
            p.set_market_range(lo, hi);
        }
        Ok(p)
    }
}
