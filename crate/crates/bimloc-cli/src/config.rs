//! Run configuration: one TOML file covering every pipeline stage.
//!
//! Flags override sections; the hash of the *effective* config (after
//! overrides) is stamped into every output so runs are attributable.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use bimloc::eval::{AlignMode, EvalConfig};
use bimloc::localizer::TrackerConfig;
use bimloc::map::MapConfig;
use bimloc::sim::SensorModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Map-build parameters (fixed `f64` mirror of [`MapConfig`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    /// Surface sampling density, points per m².
    pub density: f64,
    /// Seed of the sampling RNG.
    pub seed: u64,
    /// Neighborhood size for normal estimation.
    pub normal_k: usize,
    /// Candidate boxes examined per point during labeling.
    pub box_candidates: usize,
}

impl Default for MapSection {
    fn default() -> Self {
        let base = MapConfig::<f64>::default();
        MapSection {
            density: base.density,
            seed: base.seed,
            normal_k: base.normal_k,
            box_candidates: base.box_candidates,
        }
    }
}

impl MapSection {
    pub fn to_config(&self) -> MapConfig<f64> {
        MapConfig {
            density: self.density,
            seed: self.seed,
            normal_k: self.normal_k,
            box_candidates: self.box_candidates,
        }
    }
}

/// Evaluation parameters (serde mirror of [`EvalConfig`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub mode: AlignMode,
    /// Association tolerance, seconds.
    pub max_dt: f64,
    /// Window length for the z-drift statistic, poses.
    pub z_window: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let base = EvalConfig::default();
        EvalSection {
            mode: base.mode,
            max_dt: base.max_dt,
            z_window: base.z_window,
        }
    }
}

impl EvalSection {
    pub fn to_config(&self) -> EvalConfig {
        EvalConfig {
            mode: self.mode,
            max_dt: self.max_dt,
            z_window: self.z_window,
        }
    }
}

/// Full parameter tree; every field has a default, unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSection,
    pub tracker: TrackerConfig,
    pub sensor: SensorModel,
    pub evaluation: EvalSection,
}

impl RunConfig {
    /// Load from a TOML file, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| bimloc::Error::io(path.display().to_string(), e))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| bimloc::Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let text = toml::to_string(self).context("serializing config for hashing")?;
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(digest.len() * 2);
        for b in digest {
            write!(hex, "{b:02x}").expect("writing to a String cannot fail");
        }
        Ok(hex)
    }
}

/// Fields stamped into every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Hash the effective config and record the seed of the run's RNG stage.
    pub fn new(config: &RunConfig, seed: u64) -> Result<Self> {
        Ok(Provenance {
            tool_version: env!("CARGO_PKG_VERSION"),
            config_hash: config.hash()?,
            seed,
        })
    }

    /// Header comments for text outputs (PLY, TUM, CSV).
    pub fn comments(&self) -> Vec<String> {
        vec![
            format!("tool bimloc {}", self.tool_version),
            format!("config_hash {}", self.config_hash),
            format!("seed {}", self.seed),
        ]
    }
}
