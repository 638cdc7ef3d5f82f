//! Softmax policy heads with an exploration floor.

use ndarray::Array2;
use rand::{Rng, RngCore};

use super::net::{AugmentableNet, Grads, Stage};
use crate::error::{Error, Result};
use crate::features::{self, RowBatch};
use crate::game::{ActionPolicy, DecomposedObservation};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// (1−ε)·softmax(logits) + ε/|A|.
pub fn action_distribution(logits: &[f64], epsilon: f64) -> Vec<f64> {
    let uniform = epsilon / logits.len() as f64;
    softmax(logits)
        .into_iter()
        .map(|p| (1.0 - epsilon) * p + uniform)
        .collect()
}

/// Output layer of a policy network: logits of width |A| and the floor ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyHead {
    pub num_actions: usize,
    pub epsilon: f64,
}

impl PolicyHead {
    pub fn new(num_actions: usize, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("exploration {epsilon} outside [0, 1]")));
        }
        Ok(Self {
            num_actions,
            epsilon,
        })
    }

    pub fn distribution(&self, logits: &[f64]) -> Vec<f64> {
        action_distribution(logits, self.epsilon)
    }

    /// Row-wise distributions for a batch of logits.
    pub fn distributions(&self, logits: &Array2<f64>) -> Array2<f64> {
        let mut out = logits.as_standard_layout().into_owned();
        for mut row in out.rows_mut() {
            let p = action_distribution(row.as_slice().expect("standard layout"), self.epsilon);
            row.iter_mut().zip(p).for_each(|(o, v)| *o = v);
        }
        out
    }

    /// ∂/∂logits of Σᵢ wᵢ · log p(aᵢ | logitsᵢ).
    pub fn weighted_log_prob_grad(
        &self,
        logits: &Array2<f64>,
        actions: &[usize],
        weights: &[f64],
    ) -> Array2<f64> {
        let logits = logits.as_standard_layout();
        let mut out = Array2::zeros(logits.raw_dim());
        for (i, row) in logits.rows().into_iter().enumerate() {
            let s = softmax(row.as_slice().expect("standard layout"));
            let a = actions[i];
            let p = (1.0 - self.epsilon) * s[a] + self.epsilon / s.len() as f64;
            let scale = weights[i] * (1.0 - self.epsilon) * s[a] / p;
            for j in 0..s.len() {
                let delta = if j == a { 1.0 } else { 0.0 };
                out[[i, j]] = scale * (delta - s[j]);
            }
        }
        out
    }
}

/// A decentralized policy π(a | o_self, g), optionally widened with o_others.
/// One network is shared by all homogeneous agents.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub net: AugmentableNet,
    pub epsilon: f64,
}

impl PolicyNet {
    pub fn new(net: AugmentableNet, epsilon: f64) -> Result<Self> {
        PolicyHead::new(net.output_len(), epsilon)?;
        Ok(Self { net, epsilon })
    }

    pub fn head(&self) -> PolicyHead {
        PolicyHead {
            num_actions: self.net.output_len(),
            epsilon: self.epsilon,
        }
    }

    pub fn rows<'a>(&self, inputs: impl IntoIterator<Item = (&'a DecomposedObservation, &'a [f64])>) -> RowBatch {
        let widened = self.net.stage() == Stage::Two;
        let mut rows = RowBatch::new();
        for (obs, goal) in inputs {
            rows.push(
                features::policy_main(obs, goal),
                widened.then(|| features::policy_aug(obs)),
            );
        }
        rows
    }

    /// Action distributions, one row per (observation, goal) pair.
    pub fn distributions<'a>(
        &self,
        inputs: impl IntoIterator<Item = (&'a DecomposedObservation, &'a [f64])>,
    ) -> Result<Array2<f64>> {
        let rows = self.rows(inputs);
        if rows.is_empty() {
            return Ok(Array2::zeros((0, self.net.output_len())));
        }
        Ok(self.head().distributions(&rows.predict(&self.net)?))
    }

    /// Gradient of Σᵢ wᵢ·log π(aᵢ | oᵢ, gᵢ) with respect to the parameters.
    pub fn weighted_score<'a>(
        &self,
        inputs: impl IntoIterator<Item = (&'a DecomposedObservation, &'a [f64])>,
        actions: &[usize],
        weights: &[f64],
    ) -> Result<Grads> {
        let rows = self.rows(inputs);
        if rows.is_empty() {
            return Ok(self.net.zero_grads());
        }
        let (logits, tape) = rows.forward(&self.net)?;
        let upstream = self.head().weighted_log_prob_grad(&logits, actions, weights);
        Ok(self.net.backward(&tape, &upstream))
    }
}

impl ActionPolicy for PolicyNet {
    fn action_probabilities(&self, obs: &DecomposedObservation, goal: &[f64]) -> Result<Vec<f64>> {
        Ok(self.distributions([(obs, goal)])?.row(0).to_vec())
    }
}

pub fn sample_action(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
