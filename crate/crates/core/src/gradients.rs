//! Policy-gradient estimators: credit-function advantages, the single-agent
//! counterfactual baseline, COMA, independent actor-critic and the QV ablation.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use rand::RngCore;

use crate::critics::{batch_inputs, ComaCritic, CriticPair, ValueCritic};
use crate::env::ToyMatrixGame;
use crate::error::{Error, Result};
use crate::game::Transition;
use crate::nn::{Grads, PolicyNet};
use crate::oracle::{self, TabularPolicy, VarianceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Cm3,
    Coma,
    Iac,
    Qv,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Cm3 => "cm3",
            Estimator::Coma => "coma",
            Estimator::Iac => "iac",
            Estimator::Qv => "qv",
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cm3" => Ok(Estimator::Cm3),
            "coma" => Ok(Estimator::Coma),
            "iac" => Ok(Estimator::Iac),
            "qv" => Ok(Estimator::Qv),
            _ => Err(Error::Unknown {
                kind: "estimator",
                name: s.to_string(),
            }),
        }
    }
}

/// Σ_â p(â)·values(â).
pub fn policy_average(values: &[f64], probs: &[f64]) -> f64 {
    values.iter().zip(probs).map(|(v, p)| v * p).sum()
}

/// Q(s, a) − Σ_â π(â)Q(s, â) over one agent's own action row.
///
/// This is the Stage-One advantage and, with a row of joint values that
/// vary only the agent's own action, the COMA advantage.
pub fn counterfactual_advantage(q_row: &[f64], probs: &[f64], action: usize) -> f64 {
    q_row[action] - policy_average(q_row, probs)
}

/// Q_n(s, a⃗) − Σ_{âᵐ} πᵐ(âᵐ)·Q_n(s, âᵐ), with the credit row indexed by agent m's actions.
pub fn cm3_advantage(global_q: f64, credit_row: &[f64], probs_m: &[f64]) -> f64 {
    global_q - policy_average(credit_row, probs_m)
}

/// Q_n(s, a⃗) − V_n(s).
pub fn qv_advantage(global_q: f64, value: f64) -> f64 {
    global_q - value
}

/// r + γV(s′) − V(s), with no bootstrap from terminal states.
pub fn td_error(reward: f64, discount: f64, next_value: f64, value: f64, terminal: bool) -> f64 {
    let tail = if terminal { 0.0 } else { discount * next_value };
    reward + tail - value
}

/// Which (goal n, acting agent m) pairs enter the double sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMask {
    num_agents: usize,
    keep: Vec<bool>,
}

impl PairMask {
    pub fn full(num_agents: usize) -> Self {
        Self {
            num_agents,
            keep: vec![true; num_agents * num_agents],
        }
    }

    /// Only the own-goal pairs n = m.
    pub fn diagonal(num_agents: usize) -> Self {
        let keep = (0..num_agents * num_agents)
            .map(|i| i / num_agents == i % num_agents)
            .collect();
        Self { num_agents, keep }
    }

    pub fn set(&mut self, goal: usize, agent: usize, keep: bool) -> Result<()> {
        if goal >= self.num_agents || agent >= self.num_agents {
            return Err(Error::IndexOutOfRange(format!(
                "pair ({goal}, {agent}) with {} agents",
                self.num_agents
            )));
        }
        self.keep[goal * self.num_agents + agent] = keep;
        Ok(())
    }

    pub fn contains(&self, goal: usize, agent: usize) -> bool {
        self.keep[goal * self.num_agents + agent]
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }
}

/// Advantages for one sample: `pairs[n][m]` is A_{n,m}; `agent_weights[m]`
/// is the total weight on ∇log πᵐ(aᵐ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageEstimate {
    pub pairs: Vec<Vec<f64>>,
    pub agent_weights: Vec<f64>,
}

impl AdvantageEstimate {
    /// Build from per-pair advantages, dropping pairs outside the mask.
    pub fn from_pairs(pairs: Vec<Vec<f64>>, mask: Option<&PairMask>) -> Self {
        let n_agents = pairs.first().map_or(0, Vec::len);
        let agent_weights = (0..n_agents)
            .map(|m| {
                pairs
                    .iter()
                    .enumerate()
                    .filter(|(n, _)| mask.is_none_or(|k| k.contains(*n, m)))
                    .map(|(_, row)| row[m])
                    .sum()
            })
            .collect();
        Self { pairs, agent_weights }
    }
}

/// Current-policy distributions for every (transition, agent), agent-minor.
fn agent_distributions(policy: &PolicyNet, batch: &[&Transition]) -> Result<ndarray::Array2<f64>> {
    policy.distributions(batch_inputs(batch, false))
}

/// Σᵢ Σ_m weights[i][m]·∇log π(aᵐᵢ | oᵐᵢ, gᵐᵢ) / S, the ascent direction.
fn score_gradient(policy: &PolicyNet, batch: &[&Transition], weights: &[Vec<f64>]) -> Result<Grads> {
    let s = batch.len() as f64;
    let actions: Vec<usize> = batch.iter().flat_map(|t| t.actions.iter().copied()).collect();
    let flat: Vec<f64> = weights.iter().flatten().map(|w| w / s).collect();
    policy.weighted_score(batch_inputs(batch, false), &actions, &flat)
}

fn check_batch(batch: &[&Transition]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::EmptyMinibatch)
    } else {
        Ok(())
    }
}

/// Per-transition advantages A_{n,m} from the global Q and credit function.
pub fn cm3_advantages(
    policy: &PolicyNet,
    critics: &CriticPair,
    batch: &[&Transition],
    mask: Option<&PairMask>,
) -> Result<Vec<AdvantageEstimate>> {
    let n_agents = critics.num_agents;
    let probs = agent_distributions(policy, batch)?;
    let q = critics.global_values(batch)?;
    let credit = critics.credit_table(batch)?;
    Ok((0..batch.len())
        .map(|i| {
            let pairs = (0..n_agents)
                .map(|n| {
                    (0..n_agents)
                        .map(|m| {
                            let p = probs.row(i * n_agents + m);
                            cm3_advantage(q[i][n], &credit[i][n][m], p.as_slice().expect("standard layout"))
                        })
                        .collect()
                })
                .collect();
            AdvantageEstimate::from_pairs(pairs, mask)
        })
        .collect())
}

/// Minibatch mean of Σ_{m,n} ∇log πᵐ(aᵐ)·A_{n,m}(s, a⃗).
pub fn cm3_policy_gradient(
    policy: &PolicyNet,
    critics: &CriticPair,
    batch: &[&Transition],
    mask: Option<&PairMask>,
) -> Result<Grads> {
    check_batch(batch)?;
    let adv = cm3_advantages(policy, critics, batch, mask)?;
    let weights: Vec<Vec<f64>> = adv.into_iter().map(|a| a.agent_weights).collect();
    score_gradient(policy, batch, &weights)
}

/// Single-agent gradient ∇log π(a)·(Q(s, a) − Σ_â π(â)Q(s, â)).
pub fn stage1_policy_gradient(policy: &PolicyNet, critic: &CriticPair, batch: &[&Transition]) -> Result<Grads> {
    if critic.num_agents != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-agent gradient given {} agents",
            critic.num_agents
        )));
    }
    cm3_policy_gradient(policy, critic, batch, None)
}

/// Counterfactual gradient against COMA's summed-reward critic.
pub fn coma_policy_gradient(policy: &PolicyNet, critic: &ComaCritic, batch: &[&Transition]) -> Result<Grads> {
    check_batch(batch)?;
    let n_agents = critic.num_agents;
    let probs = agent_distributions(policy, batch)?;
    let values = critic.action_values(batch)?;
    let weights: Vec<Vec<f64>> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            (0..n_agents)
                .map(|n| {
                    let p = probs.row(i * n_agents + n);
                    counterfactual_advantage(&values[i][n], p.as_slice().expect("standard layout"), t.actions[n])
                })
                .collect()
        })
        .collect();
    score_gradient(policy, batch, &weights)
}

/// Each agent's score weighted by its own one-step TD error.
pub fn iac_policy_gradient(policy: &PolicyNet, value: &ValueCritic, batch: &[&Transition]) -> Result<Grads> {
    check_batch(batch)?;
    let weights = value.td_errors(batch)?;
    score_gradient(policy, batch, &weights)
}

/// CM3 with A_{n,m} replaced by Q_n(s, a⃗) − V_n(s), where V_n averages the
/// credit baselines over agents.
pub fn qv_policy_gradient(
    policy: &PolicyNet,
    critics: &CriticPair,
    batch: &[&Transition],
    mask: Option<&PairMask>,
) -> Result<Grads> {
    check_batch(batch)?;
    let n_agents = critics.num_agents;
    let probs = agent_distributions(policy, batch)?;
    let q = critics.global_values(batch)?;
    let credit = critics.credit_table(batch)?;
    let weights: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| {
            let pairs: Vec<Vec<f64>> = (0..n_agents)
                .map(|n| {
                    let v = (0..n_agents)
                        .map(|m| {
                            let p = probs.row(i * n_agents + m);
                            policy_average(&credit[i][n][m], p.as_slice().expect("standard layout"))
                        })
                        .sum::<f64>()
                        / n_agents as f64;
                    vec![qv_advantage(q[i][n], v); n_agents]
                })
                .collect();
            AdvantageEstimate::from_pairs(pairs, mask).agent_weights
        })
        .collect();
    score_gradient(policy, batch, &weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProbe {
    pub samples: usize,
    /// Mean sample gradient; multiply by `normalizer` to compare with ∇J.
    pub empirical_mean: Vec<f64>,
    pub normalizer: f64,
    pub covariance_trace: f64,
    pub covariance_trace_se: f64,
    /// Closed-form variance and its decomposition, when available.
    pub exact: Option<VarianceReport>,
}

/// Monte-Carlo mean and variance of an estimator on an enumerable game,
/// alongside the exact decomposition.
pub fn variance_probe(
    estimator: Estimator,
    game: &ToyMatrixGame,
    policy: &TabularPolicy,
    num_samples: usize,
    rng: &mut dyn RngCore,
) -> Result<VarianceProbe> {
    let mc = oracle::monte_carlo(game, policy, estimator, num_samples, rng)?;
    let exact = match estimator {
        Estimator::Iac => None,
        _ => Some(oracle::exact_variance(game, policy, estimator)?),
    };
    Ok(VarianceProbe {
        samples: mc.samples,
        empirical_mean: mc.mean,
        normalizer: mc.normalizer,
        covariance_trace: mc.variance,
        covariance_trace_se: mc.variance_se,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_weight_arithmetic() {
        assert_eq!(td_error(1.0, 0.5, 2.0, 1.0, false), 1.0);
        assert_eq!(td_error(1.0, 0.5, 2.0, 1.0, true), 0.0);
    }

    #[test]
    fn two_action_bandit_advantage() {
        let q = [1.0, 0.0];
        let p = [0.5, 0.5];
        assert_eq!(counterfactual_advantage(&q, &p, 0), 0.5);
        assert_eq!(counterfactual_advantage(&q, &p, 1), -0.5);
    }

    #[test]
    fn constant_credit_gives_zero_advantage_for_constant_global() {
        let credit = [3.0; 4];
        let p = [0.1, 0.2, 0.3, 0.4];
        assert!(cm3_advantage(3.0, &credit, &p).abs() < 1e-15);
        assert!((cm3_advantage(5.0, &credit, &p) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mask_filters_pairs() {
        let pairs = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let full = AdvantageEstimate::from_pairs(pairs.clone(), None);
        assert_eq!(full.agent_weights, vec![4.0, 6.0]);
        let diag = AdvantageEstimate::from_pairs(pairs, Some(&PairMask::diagonal(2)));
        assert_eq!(diag.agent_weights, vec![1.0, 4.0]);
    }

    #[test]
    fn estimator_names_roundtrip() {
        for e in [Estimator::Cm3, Estimator::Coma, Estimator::Iac, Estimator::Qv] {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("direct".parse::<Estimator>().is_err());
    }
}
