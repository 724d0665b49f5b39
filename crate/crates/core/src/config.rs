//! TOML scenario files.
//!
//! ```toml
//! [scenario]
//! name = "synthetic"
//! controller = "hierarchical"   # hierarchical | hl_only | tl | random | none
//! horizon = 1800.0              # seconds
//! seed = 1
//! rv_penetration = 1.0
//! demand = "demand.csv"         # relative to this file
//! checkpoint = "model.ckpt"     # needed by hierarchical and hl_only
//!
//! [intersection]                # lanes_per_approach, lane_mode, lane_length,
//!                               # interior_length, control_zone_radius
//! [sim]                         # dt, vehicle_length, b_emergency, ...
//! [sim.idm]                     # v0, time_headway, a_max, b_comf, s0, delta
//! [observe]                     # bins, w_max
//! [[safety_bands]]              # d_low, d_high, v_limit
//! [[signal.phases]]             # movements, green, all_red
//! [hl_only]                     # stop_decel
//! [network]                     # hidden
//! [train]                       # see TrainConfig
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{HlOnlyConfig, PlanError, SignalPlan};
use crate::controller::{ControllerKind, EnvConfig};
use crate::demand::{parse_turning_counts, DemandError};
use crate::geometry::{GeometryError, IntersectionSpec, LaneMode};
use crate::observe::ObsParams;
use crate::policy::filter::BandError;
use crate::policy::{NetConfig, SafetyBands};
use crate::ppo::{TrainConfig, TrainError};
use crate::sim::{SimError, SimParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_penetration")]
    pub rv_penetration: f64,
    #[serde(default)]
    pub demand: Option<String>,
    #[serde(default)]
    pub checkpoint: Option<String>,
    /// Seconds between high-level re-decisions.
    #[serde(default = "default_high_period")]
    pub high_period: f64,
    #[serde(default = "default_gridlock_after")]
    pub gridlock_after: f64,
}

fn default_horizon() -> f64 {
    1800.0
}
fn default_penetration() -> f64 {
    1.0
}
fn default_high_period() -> f64 {
    1.0
}
fn default_gridlock_after() -> f64 {
    120.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectionSection {
    pub lanes_per_approach: usize,
    pub lane_mode: LaneMode,
    pub lane_length: f64,
    pub interior_length: f64,
    pub control_zone_radius: f64,
}

impl Default for IntersectionSection {
    fn default() -> Self {
        IntersectionSection {
            lanes_per_approach: 2,
            lane_mode: LaneMode::Dedicated,
            lane_length: 200.0,
            interior_length: 20.0,
            control_zone_radius: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub intersection: IntersectionSection,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub observe: ObsParams,
    #[serde(default)]
    pub safety_bands: SafetyBands,
    #[serde(default)]
    pub signal: SignalPlan,
    #[serde(default)]
    pub hl_only: HlOnlyConfig,
    #[serde(default)]
    pub network: NetConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid {0}")]
    Invalid(String),
    #[error("intersection: {0}")]
    Geometry(#[from] GeometryError),
    #[error("sim: {0}")]
    Sim(#[from] SimError),
    #[error("safety_bands: {0}")]
    Bands(#[from] BandError),
    #[error("signal: {0}")]
    Plan(#[from] PlanError),
    #[error("train: {0}")]
    Train(#[from] TrainError),
    #[error("demand: {0}")]
    Demand(#[from] DemandError),
}

/// Parses and validates the file contents, without touching referenced files.
pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let cfg: ConfigFile = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl ConfigFile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let s = &self.scenario;
        if !(s.horizon.is_finite() && s.horizon >= 0.0) {
            return bad("scenario.horizon must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&s.rv_penetration) {
            return bad("scenario.rv_penetration must be in [0, 1]");
        }
        if !(s.high_period.is_finite() && s.high_period > 0.0) {
            return bad("scenario.high_period must be positive");
        }
        if !(s.gridlock_after.is_finite() && s.gridlock_after > 0.0) {
            return bad("scenario.gridlock_after must be positive");
        }
        if self.observe.bins == 0 || !(self.observe.w_max.is_finite() && self.observe.w_max > 0.0) {
            return bad("observe.bins and observe.w_max must be positive");
        }
        if self.network.hidden.iter().any(|&h| h == 0 || h > 4096) {
            return bad("network.hidden widths must be in 1..=4096");
        }
        if !(self.hl_only.stop_decel.is_finite() && self.hl_only.stop_decel > 0.0) {
            return bad("hl_only.stop_decel must be positive");
        }
        self.sim.validate()?;
        self.safety_bands.validate()?;
        self.signal.validate()?;
        self.train.validate()?;
        self.spec()?;
        Ok(())
    }

    pub fn spec(&self) -> Result<IntersectionSpec, GeometryError> {
        let i = &self.intersection;
        IntersectionSpec::new(i.lanes_per_approach, i.lane_mode, i.lane_length, i.interior_length, i.control_zone_radius)
    }

    pub fn env_config(&self, demand: [f64; 8]) -> Result<EnvConfig, ConfigError> {
        Ok(EnvConfig {
            spec: self.spec()?,
            sim: self.sim,
            obs: self.observe,
            bands: self.safety_bands.clone(),
            plan: self.signal.clone(),
            hl_only: self.hl_only,
            demand,
            rv_penetration: self.scenario.rv_penetration,
            high_period: self.scenario.high_period,
            gridlock_after: self.scenario.gridlock_after,
        })
    }
}

/// A loaded scenario with its referenced files resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub file: ConfigFile,
    pub env: EnvConfig,
    /// Hex prefix of the SHA-256 of the config bytes followed by the demand
    /// file bytes.
    pub hash: String,
    pub checkpoint: Option<PathBuf>,
    pub warnings: Vec<String>,
}

fn read(path: &Path) -> Result<Vec<u8>, ConfigError> {
    std::fs::read(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

pub fn config_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = read(path)?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| ConfigError::Invalid("config is not UTF-8".into()))?;
        let file = parse_config(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let (demand_bytes, counts) = match &file.scenario.demand {
            Some(d) => {
                let b = read(&base.join(d))?;
                let c = parse_turning_counts(&b)?;
                (b, c)
            }
            None => (Vec::new(), Default::default()),
        };
        let env = file.env_config(counts.rates)?;
        let checkpoint = file.scenario.checkpoint.as_ref().map(|c| base.join(c));
        Ok(Scenario {
            path: path.to_path_buf(),
            hash: config_hash(&[&bytes, &demand_bytes]),
            env,
            checkpoint,
            warnings: counts.warnings,
            file,
        })
    }

    pub fn controller(&self) -> ControllerKind {
        self.file.scenario.controller
    }
}
