//! Training hyperparameters with per-environment defaults.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::nn::Stage;

/// Stage-Two training method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Credit-function gradient, warm-started from Stage One.
    Cm3,
    /// CM3's networks with the agent-independent advantage Q − V.
    Qv,
    /// CM3's Stage-Two architecture trained from scratch.
    Direct,
    /// Independent actor-critic on local observations.
    Iac,
    /// Counterfactual baseline against a summed-reward critic.
    Coma,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cm3, Method::Qv, Method::Direct, Method::Iac, Method::Coma];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cm3 => "cm3",
            Method::Qv => "qv",
            Method::Direct => "direct",
            Method::Iac => "iac",
            Method::Coma => "coma",
        }
    }

    /// Whether Stage Two restores a Stage-One checkpoint.
    pub fn uses_stage_one(self) -> bool {
        matches!(self, Method::Cm3 | Method::Qv)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: s.to_string(),
            })
    }
}

/// When a training round happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainEvery {
    Episodes(usize),
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub stage: Stage,
    pub method: Method,
    pub episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which ε falls from start to end.
    pub epsilon_div: f64,
    pub buffer_capacity: usize,
    pub minibatch: usize,
    pub train_every: TrainEvery,
    pub epochs: usize,
    pub lr_policy: f64,
    /// Learning rate of every critic, value and COMA network.
    pub lr_critic: f64,
    pub tau: f64,
    pub max_steps: usize,
    /// Circular buffer trained during rollouts, instead of a buffer reset after each round.
    pub off_policy: bool,
    /// Multiplier on every hidden width.
    pub width_scale: f64,
    /// Evaluate every this many episodes; zero disables periodic evaluation.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Episodes in the evaluation after training.
    pub final_eval_episodes: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self::paper(EnvKind::Navigation, Stage::Two, Method::Cm3)
    }
}

impl TrainerConfig {
    /// Hyperparameters published for each environment, stage and method.
    pub fn paper(kind: EnvKind, stage: Stage, method: Method) -> Self {
        let mut c = Self {
            stage,
            method,
            episodes: 80_000,
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            epsilon_div: 2e4,
            buffer_capacity: 10_000,
            minibatch: 128,
            train_every: TrainEvery::Episodes(10),
            epochs: 24,
            lr_policy: 1e-4,
            lr_critic: 1e-3,
            tau: 0.01,
            max_steps: 50,
            off_policy: false,
            width_scale: 1.0,
            eval_every: 100,
            eval_episodes: 10,
            final_eval_episodes: 100,
        };
        match (kind, stage) {
            (EnvKind::Navigation, Stage::One) => {
                c.episodes = 1_000;
                c.epsilon_start = 1.0;
                c.epsilon_end = 0.01;
                c.epsilon_div = 1e3;
                c.minibatch = 256;
                c.max_steps = 25;
            }
            (EnvKind::Navigation, Stage::Two) => match method {
                Method::Cm3 | Method::Qv => {}
                Method::Direct | Method::Iac => {
                    c.epsilon_start = 1.0;
                    c.epsilon_div = 8e4;
                }
                Method::Coma => {
                    c.epsilon_start = 1.0;
                    c.lr_policy = 1e-5;
                    c.lr_critic = 1e-4;
                }
            },
            (EnvKind::LaneMerge, Stage::One) => {
                c.episodes = 2_500;
                c.epsilon_div = 2e3;
                c.train_every = TrainEvery::Steps(10);
                c.epochs = 1;
                c.max_steps = 33;
                c.off_policy = true;
            }
            (EnvKind::LaneMerge, Stage::Two) => {
                c.episodes = 50_000;
                c.buffer_capacity = 20_000;
                c.max_steps = 33;
                c.off_policy = true;
                c.train_every = TrainEvery::Steps(10);
                c.epochs = 1;
                c.epsilon_div = match method {
                    Method::Cm3 | Method::Iac => 1e3,
                    Method::Qv | Method::Direct => 4e4,
                    Method::Coma => 1e4,
                };
                if matches!(method, Method::Iac | Method::Coma) {
                    c.train_every = TrainEvery::Episodes(10);
                    c.epochs = 33;
                }
            }
            (EnvKind::Checkers, Stage::One) => {
                c.episodes = 5_000;
                c.epsilon_start = 1.0;
                c.epsilon_end = 0.1;
                c.epsilon_div = 5e2;
                c.epochs = 10;
                c.max_steps = 75;
                c.off_policy = true;
            }
            (EnvKind::Checkers, Stage::Two) => {
                c.episodes = 50_000;
                c.epsilon_end = 0.1;
                c.max_steps = 75;
                c.off_policy = true;
                c.train_every = TrainEvery::Steps(10);
                c.epochs = 1;
                c.epsilon_div = 1e3;
                match method {
                    Method::Cm3 | Method::Qv => {}
                    Method::Direct => {
                        c.epsilon_start = 1.0;
                        c.epsilon_div = 1e4;
                    }
                    Method::Iac | Method::Coma => {
                        c.epsilon_start = 1.0;
                        c.epsilon_div = if method == Method::Iac { 2e4 } else { 1e4 };
                        c.train_every = TrainEvery::Episodes(10);
                        c.epochs = 33;
                    }
                }
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("exploration rates must lie in [0, 1]".into());
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end exceeds epsilon_start".into());
        }
        if self.epsilon_div <= 0.0 {
            return bad("epsilon_div must be positive".into());
        }
        if self.minibatch == 0 || self.buffer_capacity == 0 || self.max_steps == 0 {
            return bad("minibatch, buffer capacity and max steps must be positive".into());
        }
        if matches!(self.train_every, TrainEvery::Episodes(0) | TrainEvery::Steps(0)) {
            return bad("training interval must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.width_scale <= 0.0 {
            return bad("width_scale must be positive".into());
        }
        if self.stage == Stage::One && self.method != Method::Cm3 {
            return bad(format!("Stage One trains CM3's single-agent networks, not {}", self.method));
        }
        Ok(())
    }

    /// ε_step := (ε_start − ε_end) / ε_div.
    pub fn epsilon_step(&self) -> f64 {
        (self.epsilon_start - self.epsilon_end) / self.epsilon_div
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn navigation_stage_one_defaults() {
        let c = TrainerConfig::paper(EnvKind::Navigation, Stage::One, Method::Cm3);
        assert_eq!(c.episodes, 1000);
        assert_eq!((c.epsilon_start, c.epsilon_end, c.epsilon_div), (1.0, 0.01, 1e3));
        assert_eq!((c.buffer_capacity, c.minibatch, c.max_steps), (10_000, 256, 25));
        assert_eq!((c.lr_policy, c.lr_critic), (1e-4, 1e-3));
        assert!(!c.off_policy);
        c.validate().unwrap();
    }

    #[test]
    fn lane_merge_stage_one_defaults() {
        let c = TrainerConfig::paper(EnvKind::LaneMerge, Stage::One, Method::Cm3);
        assert_eq!(c.episodes, 2500);
        assert_eq!((c.epsilon_start, c.epsilon_end, c.epsilon_div), (0.5, 0.05, 2e3));
        assert!(c.off_policy);
    }

    #[test]
    fn navigation_stage_two_methods() {
        let cm3 = TrainerConfig::paper(EnvKind::Navigation, Stage::Two, Method::Cm3);
        assert_eq!((cm3.epsilon_start, cm3.epsilon_div), (0.5, 2e4));
        assert_eq!((cm3.minibatch, cm3.epochs), (128, 24));
        assert_eq!(cm3.train_every, TrainEvery::Episodes(10));
        let direct = TrainerConfig::paper(EnvKind::Navigation, Stage::Two, Method::Direct);
        assert_eq!(direct.epsilon_start, 1.0);
        let coma = TrainerConfig::paper(EnvKind::Navigation, Stage::Two, Method::Coma);
        assert_eq!((coma.lr_policy, coma.lr_critic), (1e-5, 1e-4));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = TrainerConfig::default();
        c.epsilon_end = 0.9;
        assert!(c.validate().is_err());
        let mut c = TrainerConfig::default();
        c.tau = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let c = TrainerConfig::paper(EnvKind::Checkers, Stage::Two, Method::Iac);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<TrainerConfig>(&text).unwrap(), c);
        let partial: TrainerConfig = toml::from_str("episodes = 7\n[train_every]\nsteps = 3\n").unwrap();
        assert_eq!(partial.episodes, 7);
        assert_eq!(partial.train_every, TrainEvery::Steps(3));
    }
}
