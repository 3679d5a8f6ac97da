//! Experiment files: TOML with `[map]`, `[events]`, `[agent]` and `[run]`.
//!
//! ```toml
//! [map]
//! path = "../maps/office10.txt"   # relative to this file
//!
//! [events]
//! bound = 1
//! generate = "periodic"           # or "binomial"; or give [events.spec]
//!
//! [agent]
//! kind = "dps_max"
//! baseline = "adt_greedy"
//!
//! [agent.learner]
//! max_steps = 60000
//!
//! [run]
//! instances = 8
//! seed = 1
//! horizon = 50000
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use areasweep_core::baselines::GreedyConfig;
use areasweep_core::encoding::EncodingConfig;
use areasweep_core::gridworld::{load_map, GeneratorSpec, GridMap};
use areasweep_core::rlearn::AgentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub path: Option<PathBuf>,
    /// Inline map text, used when `path` is absent.
    pub text: Option<String>,
}

/// Random instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceVariant {
    Binomial,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsSection {
    #[serde(default = "one")]
    pub bound: u32,
    /// Draw a fresh five-site instance per seed.
    pub generate: Option<InstanceVariant>,
    /// Fixed generator shared by every instance.
    pub spec: Option<GeneratorSpec>,
}

fn one() -> u32 {
    1
}

impl Default for EventsSection {
    fn default() -> Self {
        Self { bound: 1, generate: Some(InstanceVariant::Binomial), spec: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    DpsMax,
    AdtGreedy,
    Patrol,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::DpsMax => "dps_max",
            AgentKind::AdtGreedy => "adt_greedy",
            AgentKind::Patrol => "patrol",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub kind: AgentKind,
    /// Reference agent of `compare`.
    pub baseline: AgentKind,
    pub encoding: EncodingConfig,
    pub learner: AgentConfig,
    pub greedy: GreedyConfig,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            kind: AgentKind::DpsMax,
            baseline: AgentKind::AdtGreedy,
            encoding: EncodingConfig::default(),
            learner: AgentConfig::default(),
            greedy: GreedyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub instances: usize,
    /// Base seed; instance `i` uses `seed + i` unless `seeds` is given.
    pub seed: u64,
    pub seeds: Vec<u64>,
    /// Evaluation length in simulated seconds.
    pub horizon: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { instances: 8, seed: 0, seeds: Vec::new(), horizon: 50_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSection,
    pub events: EventsSection,
    pub agent: AgentSection,
    pub run: RunSection,
    /// Directory that relative map paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|source| HarnessError::Read { path: path.display().to_string(), source })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.instances == 0 {
            return Err(invalid("run.instances must be at least 1"));
        }
        if self.events.bound == 0 {
            return Err(invalid("events.bound must be at least 1"));
        }
        match (&self.events.generate, &self.events.spec) {
            (Some(_), Some(_)) => return Err(invalid("give either events.generate or events.spec, not both")),
            (None, None) => return Err(invalid("events needs generate or spec")),
            _ => {}
        }
        if !self.run.seeds.is_empty() && self.run.seeds.len() < self.run.instances {
            return Err(invalid(format!(
                "run.seeds lists {} seeds for {} instances",
                self.run.seeds.len(),
                self.run.instances
            )));
        }
        let seeds = self.seeds();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(invalid("run seeds must be distinct"));
        }
        if self.run.horizon == 0 {
            return Err(invalid("run.horizon must be positive"));
        }
        self.agent.learner.validate()?;
        self.agent.encoding.validate()?;
        Ok(())
    }

    /// One seed per instance.
    pub fn seeds(&self) -> Vec<u64> {
        if self.run.seeds.is_empty() {
            (0..self.run.instances as u64).map(|i| self.run.seed.wrapping_add(i)).collect()
        } else {
            self.run.seeds[..self.run.instances].to_vec()
        }
    }

    pub fn load_map(&self) -> Result<GridMap> {
        let text = match (&self.map.path, &self.map.text) {
            (Some(p), _) => {
                let full = if p.is_absolute() { p.clone() } else { self.base_dir.join(p) };
                fs::read_to_string(&full)
                    .map_err(|source| HarnessError::Read { path: full.display().to_string(), source })?
            }
            (None, Some(t)) => t.clone(),
            (None, None) => return Err(invalid("map needs path or text")),
        };
        Ok(load_map(&text)?)
    }
}
