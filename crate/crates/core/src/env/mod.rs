//! In-repo environments.

pub mod checkers;
pub mod lane_merge;
pub mod navigation;
pub mod scenario;
pub mod toy;

use serde::{Deserialize, Serialize};

pub use checkers::{CheckersConfig, CheckersWorld};
pub use lane_merge::{LaneMergeWorld, LaneScenario, MergeConfig};
pub use navigation::{Formation, NavConfig, NavigationWorld};
pub use scenario::{EnvConfig, GameTask, Scenario};
pub use toy::{ToyMatrixGame, ToyShape};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Navigation,
    LaneMerge,
    Checkers,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Navigation => "navigation",
            EnvKind::LaneMerge => "lane_merge",
            EnvKind::Checkers => "checkers",
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nav" | "navigation" => Ok(EnvKind::Navigation),
            "lane_merge" | "merge" | "sumo" | "lane" => Ok(EnvKind::LaneMerge),
            "checkers" => Ok(EnvKind::Checkers),
            _ => Err(Error::Unknown {
                kind: "environment",
                name: s.to_string(),
            }),
        }
    }
}
