//! JSON scenario files.

use crate::error::{PharaError, Result};
use crate::market::{MarketParams, MarketSpec};
use crate::phara::compose::{compose, PiecewiseLinearPayoff, PreferenceSpec};
use crate::phara::{PharaUtility, UtilitySpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Utility given piece by piece, or as a preference applied to a payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum UtilityBlock {
    Pieces(UtilitySpec),
    Composed { preference: PreferenceSpec, payoff: PiecewiseLinearPayoff },
}

impl UtilityBlock {
    pub fn build(&self) -> Result<PharaUtility> {
        match self {
            UtilityBlock::Pieces(spec) => spec.build(),
            UtilityBlock::Composed { preference, payoff } => compose(&preference.build()?, payoff),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Dates for the surface sweep.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Upper end of the sweep in undiscounted wealth units; defaults to twice
    /// the last finite partition point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth_max: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Single point for `decompose`; defaults to `(0, x0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompose_at: Option<Point>,
}

fn default_times() -> Vec<f64> {
    vec![0.0]
}

fn default_points() -> usize {
    400
}

impl Default for Grids {
    fn default() -> Self {
        Grids { times: default_times(), wealth_max: None, points: default_points(), decompose_at: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaharaSpec {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub market: MarketSpec,
    pub utility: UtilityBlock,
    pub x0: f64,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sahara: Option<SaharaSpec>,
}

fn default_seed() -> u64 {
    20_240_601
}

fn default_paths() -> usize {
    100_000
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()? + "\n")?)
    }

    fn check(&self) -> Result<()> {
        if !self.x0.is_finite() {
            return Err(PharaError::Scenario(format!("x0 must be finite, got {}", self.x0)));
        }
        if self.grids.points < 2 {
            return Err(PharaError::Scenario("grids.points must be at least 2".into()));
        }
        if self.grids.times.iter().any(|t| !(*t >= 0.0 && *t < self.market.horizon)) {
            return Err(PharaError::Scenario("grid times must lie in [0, T)".into()));
        }
        Ok(())
    }

    pub fn market(&self) -> Result<MarketParams> {
        MarketParams::from_spec(&self.market)
    }

    pub fn utility(&self) -> Result<PharaUtility> {
        self.utility.build()
    }
}
