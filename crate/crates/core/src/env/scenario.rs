//! Scenario files: which environment, how it is configured, and a seed.
//!
//! ```toml
//! seed = 7
//!
//! [env]
//! kind = "navigation"
//! formation = "merge"
//! num_agents = 2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CheckersConfig, CheckersWorld, EnvKind, LaneMergeWorld, LaneScenario, MergeConfig, NavConfig, NavigationWorld};
use crate::error::{Error, Result};
use crate::game::MultiGoalGame;

/// Work that runs against whichever concrete game an [`EnvConfig`] builds.
pub trait GameTask {
    type Output;

    fn run<G: MultiGoalGame>(self, game: G) -> Result<Self::Output>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Navigation(NavConfig),
    LaneMerge(MergeConfig),
    Checkers(CheckersConfig),
}

impl EnvConfig {
    pub fn default_for(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Navigation => EnvConfig::Navigation(NavConfig::default()),
            EnvKind::LaneMerge => EnvConfig::LaneMerge(MergeConfig::default()),
            EnvKind::Checkers => EnvConfig::Checkers(CheckersConfig::default()),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EnvConfig::Navigation(_) => EnvKind::Navigation,
            EnvConfig::LaneMerge(_) => EnvKind::LaneMerge,
            EnvConfig::Checkers(_) => EnvKind::Checkers,
        }
    }

    /// Build the configured world and hand it to `task`.
    pub fn visit<T: GameTask>(&self, task: T) -> Result<T::Output> {
        match self {
            EnvConfig::Navigation(c) => task.run(NavigationWorld::new(c.clone())?),
            EnvConfig::LaneMerge(c) => task.run(LaneMergeWorld::new(c.clone())?),
            EnvConfig::Checkers(c) => task.run(CheckersWorld::new(c.clone())?),
        }
    }

    /// Lane-merge evaluation layout with scripted traffic; other environments are unchanged.
    pub fn with_lane_scenario(&self, scenario: LaneScenario, background: usize) -> Result<Self> {
        match self {
            EnvConfig::LaneMerge(c) => Ok(EnvConfig::LaneMerge(MergeConfig {
                num_agents: c.num_agents,
                ..MergeConfig::scenario(scenario, background)
            })),
            other => Err(Error::InvalidArgument(format!(
                "lane scenarios apply to lane_merge, not {}",
                other.kind()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub seed: Option<u64>,
    pub env: EnvConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
