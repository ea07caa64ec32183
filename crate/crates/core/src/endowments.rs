//! Agent populations: endowment files and synthetic profiles.
//!
//! Endowment files are CSV with the header `kind,shares,cash`, one agent per
//! row, `kind` one of `PS`, `PB`, `BS`. Profiles describe how to synthesize a
//! population of the right size and shape; they are stored as TOML.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{AgentKind, AgentState, Money};
use crate::rng::SimRng;

/// A non-negative distribution whose draws are rounded to whole units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistSpec {
    Constant {
        value: f64,
    },
    UniformInt {
        lo: u64,
        hi: u64,
    },
    /// `round(exp(N(mu, sigma)))`.
    LognormalRounded {
        mu: f64,
        sigma: f64,
    },
    /// `round(Pareto(scale, shape))`, support `[scale, inf)`.
    ParetoRounded {
        scale: f64,
        shape: f64,
    },
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistSpec::Constant { value } => value.is_finite() && value >= 0.0,
            DistSpec::UniformInt { lo, hi } => lo <= hi,
            DistSpec::LognormalRounded { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            DistSpec::ParetoRounded { scale, shape } => {
                scale.is_finite() && scale > 0.0 && shape.is_finite() && shape > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::config(format!("invalid distribution {self:?}")))
        }
    }

    /// One draw, rounded to a whole number. Assumes `validate` passed.
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let x = match *self {
            DistSpec::Constant { value } => value,
            DistSpec::UniformInt { lo, hi } => (lo + rng.index((hi - lo + 1) as usize) as u64) as f64,
            DistSpec::LognormalRounded { mu, sigma } => LogNormal::new(mu, sigma)
                .expect("validated lognormal")
                .sample(rng.generator()),
            DistSpec::ParetoRounded { scale, shape } => Pareto::new(scale, shape)
                .expect("validated pareto")
                .sample(rng.generator()),
        };
        x.round().clamp(0.0, 1e15)
    }
}

/// Recipe for a synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndowmentProfile {
    pub n_pb: u32,
    pub n_ps: u32,
    pub n_bs: u32,
    /// Fraction of pure sellers holding at least one share.
    pub ps_holder_frac: f64,
    /// Fraction of buyer-sellers holding at least one share.
    pub bs_holder_frac: f64,
    /// Share counts of pure sellers that hold shares (drawn values below 1 become 1).
    pub share_dist_ps: DistSpec,
    /// Share counts of buyer-sellers that hold shares.
    pub share_dist_bs: DistSpec,
    /// Cash of pure buyers, in whole euros.
    pub cash_dist_pb: DistSpec,
    /// Cash of buyer-sellers, in whole euros.
    pub cash_dist_bs: DistSpec,
    /// Lower bound applied to every drawn cash balance.
    pub cash_floor: f64,
}

impl EndowmentProfile {
    pub fn validate(&self) -> Result<()> {
        if self.n_pb == 0 || self.n_ps == 0 || self.n_bs == 0 {
            return Err(SimError::config("agent counts must be positive"));
        }
        for (name, f) in [
            ("ps_holder_frac", self.ps_holder_frac),
            ("bs_holder_frac", self.bs_holder_frac),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(SimError::config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        if !(self.cash_floor.is_finite() && self.cash_floor >= 0.0) {
            return Err(SimError::config("cash_floor must be a non-negative amount"));
        }
        self.share_dist_ps.validate()?;
        self.share_dist_bs.validate()?;
        self.cash_dist_pb.validate()?;
        self.cash_dist_bs.validate()
    }

    pub fn population_size(&self) -> usize {
        (self.n_pb + self.n_ps + self.n_bs) as usize
    }

    /// The calibrated profile shipped with the crate.
    pub fn shipped() -> ProfileDocument {
        ProfileDocument::from_toml(SHIPPED_PROFILE).expect("shipped profile parses")
    }
}

const SHIPPED_PROFILE: &str = include_str!("../data/default_profile.toml");

/// Provenance of a calibrated profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRecord {
    pub seed: u64,
    pub budget: usize,
    pub reps: usize,
    pub objective: f64,
}

/// A profile file: the profile, the seed that turns it into a concrete
/// population, and optionally how it was calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub population_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
    pub profile: EndowmentProfile,
}

impl ProfileDocument {
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: ProfileDocument = toml::from_str(text).map_err(|e| SimError::Format(format!("profile: {e}")))?;
        doc.profile.validate()?;
        Ok(doc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Format(msg) => SimError::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| SimError::io(path, e))
    }

    pub fn generate(&self) -> Result<Vec<AgentState>> {
        generate_population(&self.profile, &mut SimRng::seed_from_u64(self.population_seed))
    }
}

/// Synthesizes a population: pure buyers first, then pure sellers, then
/// buyer-sellers, with ids in that order.
pub fn generate_population(profile: &EndowmentProfile, rng: &mut SimRng) -> Result<Vec<AgentState>> {
    profile.validate()?;
    let mut out = Vec::with_capacity(profile.population_size());
    let mut push = |kind, shares, cash| {
        let id = out.len() as u32;
        out.push(AgentState::new(id, kind, shares, cash));
    };
    let cash = |dist: &DistSpec, rng: &mut SimRng| Money::from_euros(dist.sample(rng).max(profile.cash_floor));
    let holding = |frac: f64, dist: &DistSpec, rng: &mut SimRng| {
        if rng.uniform() < frac {
            (dist.sample(rng) as u64).max(1)
        } else {
            0
        }
    };
    for _ in 0..profile.n_pb {
        let c = cash(&profile.cash_dist_pb, rng);
        push(AgentKind::PureBuyer, 0, c);
    }
    for _ in 0..profile.n_ps {
        let s = holding(profile.ps_holder_frac, &profile.share_dist_ps, rng);
        push(AgentKind::PureSeller, s, Money::ZERO);
    }
    for _ in 0..profile.n_bs {
        let s = holding(profile.bs_holder_frac, &profile.share_dist_bs, rng);
        let c = cash(&profile.cash_dist_bs, rng);
        push(AgentKind::BuyerSeller, s, c);
    }
    Ok(out)
}

fn parse_cash(field: &str) -> std::result::Result<Money, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("cash `{field}` is not a number"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("cash `{field}` must be a non-negative amount"));
    }
    Ok(Money::from_euros(v))
}

fn parse_shares(field: &str) -> std::result::Result<u64, String> {
    let t = field.trim();
    if t.starts_with('-') {
        return Err(format!("shares `{field}` must not be negative"));
    }
    t.parse().map_err(|_| format!("shares `{field}` is not a whole number"))
}

/// Reads an endowment table. Agent ids follow row order.
pub fn read_population(input: impl Read, path: &Path) -> Result<Vec<AgentState>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    let mut seen_header = false;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let load_err = |message: String| SimError::Load {
            path: path.to_path_buf(),
            row,
            message,
        };
        let record = record.map_err(|e| load_err(e.to_string()))?;
        if !seen_header {
            seen_header = true;
            let header: Vec<&str> = record.iter().collect();
            if header != ["kind", "shares", "cash"] {
                return Err(load_err(format!(
                    "expected header `kind,shares,cash`, found `{}`",
                    header.join(",")
                )));
            }
            continue;
        }
        if record.len() != 3 {
            return Err(load_err(format!("expected 3 fields, found {}", record.len())));
        }
        let kind = AgentKind::from_label(&record[0])
            .ok_or_else(|| load_err(format!("unknown agent kind `{}`", &record[0])))?;
        let shares = parse_shares(&record[1]).map_err(load_err)?;
        let cash = parse_cash(&record[2]).map_err(load_err)?;
        out.push(AgentState::new(out.len() as u32, kind, shares, cash));
    }
    Ok(out)
}

pub fn load_population(path: &Path) -> Result<Vec<AgentState>> {
    let file = File::open(path).map_err(|e| SimError::io(path, e))?;
    read_population(file, path)
}

pub fn write_population(population: &[AgentState], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "kind,shares,cash")?;
    for a in population {
        writeln!(out, "{},{},{}", a.kind.label(), a.shares, a.cash)?;
    }
    Ok(())
}

pub fn save_population(population: &[AgentState], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| SimError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_population(population, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| SimError::io(path, e))
}
