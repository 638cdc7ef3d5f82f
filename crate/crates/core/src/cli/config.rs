//! Run configuration files: environment plus per-stage overrides of the published defaults.
//!
//! ```toml
//! seed = 3
//!
//! [env]
//! kind = "navigation"
//! formation = "merge"
//!
//! [stage_one]
//! episodes = 1000
//!
//! [stage_two]
//! epochs = 24
//!
//! [stage_two.direct]
//! epsilon_start = 1.0
//! ```
//!
//! A subtable named after a method applies only when training that method.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::env::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::nn::Stage;
use crate::trainer::{Method, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub env: EnvConfig,
    #[serde(default)]
    pub stage_one: Table,
    #[serde(default)]
    pub stage_two: Table,
}

impl RunConfig {
    pub fn for_env(kind: EnvKind) -> Self {
        Self {
            seed: None,
            env: EnvConfig::default_for(kind),
            stage_one: Table::new(),
            stage_two: Table::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Published defaults for this environment, stage and method with the file's overrides applied.
    pub fn trainer(&self, stage: Stage, method: Method) -> Result<TrainerConfig> {
        let base = TrainerConfig::paper(self.env.kind(), stage, method);
        let section = match stage {
            Stage::One => &self.stage_one,
            Stage::Two => &self.stage_two,
        };
        let mut merged = Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        let method_names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        for (key, value) in section {
            if !method_names.contains(&key.as_str()) {
                merged.insert(key.clone(), value.clone());
            }
        }
        if let Some(Value::Table(specific)) = section.get(method.name()) {
            for (key, value) in specific {
                merged.insert(key.clone(), value.clone());
            }
        }
        merged.insert("stage".into(), Value::try_from(stage).map_err(|e| Error::Config(e.to_string()))?);
        merged.insert("method".into(), Value::String(method.name().into()));
        let config: TrainerConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::TrainEvery;

    #[test]
    fn overrides_apply_per_method() {
        let cfg = RunConfig::from_toml(
            "seed = 4\n[env]\nkind = \"navigation\"\n[stage_two]\nepochs = 3\n[stage_two.direct]\nepisodes = 9\n[stage_two.train_every]\nsteps = 5\n",
        )
        .unwrap();
        let cm3 = cfg.trainer(Stage::Two, Method::Cm3).unwrap();
        assert_eq!(cm3.epochs, 3);
        assert_eq!(cm3.episodes, 80_000);
        assert_eq!(cm3.train_every, TrainEvery::Steps(5));
        let direct = cfg.trainer(Stage::Two, Method::Direct).unwrap();
        assert_eq!(direct.episodes, 9);
        assert_eq!(direct.epsilon_start, 1.0);
    }

    #[test]
    fn defaults_match_published_tables() {
        let cfg = RunConfig::for_env(EnvKind::LaneMerge);
        assert_eq!(
            cfg.trainer(Stage::One, Method::Cm3).unwrap(),
            TrainerConfig::paper(EnvKind::LaneMerge, Stage::One, Method::Cm3)
        );
    }

    #[test]
    fn bad_override_rejected() {
        let cfg = RunConfig::from_toml("[env]\nkind = \"checkers\"\n[stage_one]\ntau = 2.0\n").unwrap();
        assert!(cfg.trainer(Stage::One, Method::Cm3).is_err());
        let cfg = RunConfig::from_toml("[env]\nkind = \"checkers\"\n[stage_one]\nepisodes = \"many\"\n").unwrap();
        assert!(cfg.trainer(Stage::One, Method::Cm3).is_err());
    }
}
