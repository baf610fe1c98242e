//! The declarative run configuration, read from and written to TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actors::{EdConfig, FdsConfig};
use crate::channel::{CostTable, LinkConfig};
use crate::crypto::CryptoProfile;
use crate::dppuf::{
    DelayDistribution, DppufConfig, LayerKind, SetDescriptor, Topology, DEFAULT_LAYERS, DEFAULT_WIDTH, MIN_ESG_FACTOR,
};
use crate::dppuf::{Matcher, SearchOptions};
use crate::fuzzy::FuzzyExtractor;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("writing config: {0}")]
    Emit(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PufSettings {
    pub width: usize,
    /// Empty means the default alternating pattern.
    pub layer_pattern: Vec<LayerKind>,
    pub delay_distribution: DelayDistribution,
}

impl Default for PufSettings {
    fn default() -> Self {
        Self {
            width: DEFAULT_WIDTH,
            layer_pattern: Vec::new(),
            delay_distribution: DelayDistribution::default(),
        }
    }
}

impl PufSettings {
    pub fn instance(&self, seed: u64) -> DppufConfig {
        let layer_pattern = if self.layer_pattern.is_empty() {
            Topology::alternating(self.width, DEFAULT_LAYERS).layers
        } else {
            self.layer_pattern.clone()
        };
        DppufConfig {
            width: self.width,
            layer_pattern,
            delay_distribution: self.delay_distribution,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub profile: CryptoProfile,
    /// Wall-clock epoch seconds at virtual time zero.
    pub base_epoch: u64,
    /// Model simulation cost over hardware evaluation cost.
    pub esg_factor: u64,
    /// Bits flipped in every hardware response; above zero, searches match
    /// within the fuzzy extractor's capacity instead of exactly.
    pub noise_flips: usize,
    pub puf: PufSettings,
    pub costs: CostTable,
    pub link: LinkConfig,
    pub ed: EdConfig,
    pub fds: FdsConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            profile: CryptoProfile::Lightweight,
            base_epoch: 1_700_000_000,
            esg_factor: 1000,
            noise_flips: 0,
            puf: PufSettings::default(),
            costs: CostTable::symbolic(),
            link: LinkConfig::default(),
            ed: EdConfig::default(),
            fds: FdsConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let c: SimConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.puf.instance(0).validate() {
            return bad(e.to_string());
        }
        if self.esg_factor < MIN_ESG_FACTOR {
            return bad(format!("esg_factor must be at least {MIN_ESG_FACTOR}"));
        }
        if self.costs.ppuf_hw == 0 {
            return bad("costs.ppuf_hw must be positive".into());
        }
        if SetDescriptor::new(0, self.ed.set_size).is_err() {
            return bad(format!("ed.set_size {} out of range", self.ed.set_size));
        }
        if self.noise_flips > self.puf.width {
            return bad("noise_flips exceeds the response width".into());
        }
        if self.ed.failure_threshold == 0 {
            return bad("ed.failure_threshold must be positive".into());
        }
        Ok(())
    }

    /// Costs with the simulation rate tied to the execution-simulation gap.
    pub fn effective_costs(&self) -> CostTable {
        CostTable {
            ppuf_sim: self.costs.ppuf_hw * self.esg_factor,
            ..self.costs
        }
    }

    /// Per-purpose seed derived from the master seed.
    pub fn derive_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    pub fn search_options(&self) -> SearchOptions {
        let matcher = if self.noise_flips > 0 {
            Matcher::Fuzzy(FuzzyExtractor::default())
        } else {
            Matcher::Exact
        };
        SearchOptions { matcher, noise: None }
    }
}

/// First eight bytes of `SHA-256("ppuf-fwupdate/seed" || le64(seed) || label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let d = Sha256::new()
        .chain_update(b"ppuf-fwupdate/seed")
        .chain_update(seed.to_le_bytes())
        .chain_update(label.as_bytes())
        .finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}
