//! Cooperative multi-goal multi-agent reinforcement learning with credit
//! functions and a two-stage curriculum.

pub mod cli;
pub mod critics;
pub mod env;
pub mod error;
pub mod features;
pub mod game;
pub mod gradients;
pub mod nn;
pub mod oracle;
pub mod trainer;

pub use error::{Error, Result};
