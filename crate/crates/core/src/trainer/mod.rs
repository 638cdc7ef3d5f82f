//! Curriculum orchestration: rollouts, replay, training rounds and evaluation.

pub mod buffer;
pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod models;
pub mod run;

pub use buffer::{BufferMode, EpsilonSchedule, ReplayBuffer};
pub use config::{Method, TrainEvery, TrainerConfig};
pub use evaluate::{evaluate, evaluate_policy, evaluate_with, policy_actions, EvalReport};
pub use metrics::{read_metrics, MetricRecord, MetricsWriter};
pub use models::{Critics, EpochStats, Learner, ModelMeta};
pub use run::{run_stage1, run_stage2, sample_goals, RunOptions, SeedStreams, StageOutcome};
