//! Replay storage and the exploration schedule.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::game::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    /// Emptied after every training round.
    ResetAfterTraining,
    /// Oldest transitions evicted once full.
    Circular,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    mode: BufferMode,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, mode: BufferMode) -> Self {
        Self {
            capacity,
            mode,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn mode(&self) -> BufferMode {
        self.mode
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Up to `size` distinct transitions chosen uniformly.
    pub fn sample(&self, size: usize, rng: &mut dyn RngCore) -> Vec<&Transition> {
        let n = self.items.len();
        let k = size.min(n);
        sample(rng, n, k).into_iter().map(|i| &self.items[i]).collect()
    }

    /// Called once a training round finishes.
    pub fn after_training(&mut self) {
        if self.mode == BufferMode::ResetAfterTraining {
            self.items.clear();
        }
    }

    /// A uniformly chosen stored transition.
    pub fn random(&self, rng: &mut dyn RngCore) -> Option<&Transition> {
        if self.items.is_empty() {
            None
        } else {
            Some(&self.items[rng.random_range(0..self.items.len())])
        }
    }
}

/// ε decremented by a fixed step per episode down to a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub step: f64,
    episodes: usize,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, div: f64) -> Self {
        Self {
            start,
            end,
            step: (start - end) / div,
            episodes: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.after(self.episodes)
    }

    /// One episode has finished.
    pub fn advance(&mut self) {
        self.episodes += 1;
    }

    /// max(end, start − k·step).
    pub fn after(&self, episodes: usize) -> f64 {
        (self.start - episodes as f64 * self.step).max(self.end)
    }
}
