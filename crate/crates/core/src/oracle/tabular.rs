//! Softmax table policies and exact finite-horizon evaluation.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::env::ToyMatrixGame;
use crate::error::{Error, Result};
use crate::game::{decode_joint_action, ActionPolicy, DecomposedObservation};
use crate::nn::action_distribution;

/// Logit tables, one row per (agent, observation) context.
///
/// With `shared` all agents read the same rows, indexed by (observation,
/// goal); otherwise each agent has its own rows indexed by observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub theta: Vec<f64>,
    pub epsilon: f64,
    shared: bool,
    action_sizes: Vec<usize>,
    observations: Vec<Vec<usize>>,
    assignment: Vec<usize>,
    num_goals: usize,
    row_offsets: Vec<usize>,
}

impl TabularPolicy {
    pub fn zeros(game: &ToyMatrixGame, shared: bool, epsilon: f64) -> Result<Self> {
        let sizes = game.action_sizes().to_vec();
        if shared && sizes.iter().any(|&a| a != sizes[0]) {
            return Err(Error::InvalidArgument(
                "shared parameters need equal action counts".into(),
            ));
        }
        let num_goals = game.num_goals();
        let mut row_offsets = Vec::with_capacity(sizes.len());
        let total = if shared {
            let obs = game.num_observations.iter().copied().max().unwrap_or(1);
            row_offsets.resize(sizes.len(), 0);
            obs * num_goals * sizes[0]
        } else {
            let mut off = 0;
            for (n, &a) in sizes.iter().enumerate() {
                row_offsets.push(off);
                off += game.num_observations[n] * a;
            }
            off
        };
        Ok(Self {
            theta: vec![0.0; total],
            epsilon,
            shared,
            action_sizes: sizes,
            observations: game.observations.clone(),
            assignment: game.assignment.clone(),
            num_goals,
            row_offsets,
        })
    }

    /// Logits uniform in ±`scale`.
    pub fn random(
        game: &ToyMatrixGame,
        shared: bool,
        epsilon: f64,
        scale: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let mut p = Self::zeros(game, shared, epsilon)?;
        for t in &mut p.theta {
            *t = rng.random_range(-scale..=scale);
        }
        Ok(p)
    }

    pub fn num_agents(&self) -> usize {
        self.action_sizes.len()
    }

    pub fn action_sizes(&self) -> &[usize] {
        &self.action_sizes
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    /// Parameter indices owned by agent `n`; all parameters when shared.
    pub fn agent_params(&self, n: usize) -> std::ops::Range<usize> {
        if self.shared {
            0..self.theta.len()
        } else {
            let end = self.row_offsets.get(n + 1).copied().unwrap_or(self.theta.len());
            self.row_offsets[n]..end
        }
    }

    /// Offset of the logit row agent `n` uses in state `s`.
    pub fn row(&self, n: usize, s: usize) -> usize {
        self.row_for_obs(n, self.observations[n][s])
    }

    fn row_for_obs(&self, n: usize, obs: usize) -> usize {
        let a = self.action_sizes[n];
        if self.shared {
            (obs * self.num_goals + self.assignment[n]) * a
        } else {
            self.row_offsets[n] + obs * a
        }
    }

    pub fn logits(&self, n: usize, s: usize) -> &[f64] {
        let r = self.row(n, s);
        &self.theta[r..r + self.action_sizes[n]]
    }

    /// πⁿ(·|oⁿ(s), gⁿ).
    pub fn probs(&self, n: usize, s: usize) -> Vec<f64> {
        action_distribution(self.logits(n, s), self.epsilon)
    }

    /// Nonzero entries of ∇_θ log πⁿ(a|oⁿ(s), gⁿ) as (parameter index, value).
    pub fn grad_log_prob(&self, n: usize, s: usize, a: usize) -> Vec<(usize, f64)> {
        let r = self.row(n, s);
        let k = self.action_sizes[n];
        let soft = crate::nn::softmax(&self.theta[r..r + k]);
        let p = (1.0 - self.epsilon) * soft[a] + self.epsilon / k as f64;
        let scale = (1.0 - self.epsilon) * soft[a] / p;
        (0..k)
            .map(|j| {
                let delta = if j == a { 1.0 } else { 0.0 };
                (r + j, scale * (delta - soft[j]))
            })
            .collect()
    }

    /// Per-agent probabilities for every state: `[agent][state][action]`.
    pub fn prob_tables(&self, num_states: usize) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_agents())
            .map(|n| (0..num_states).map(|s| self.probs(n, s)).collect())
            .collect()
    }

    /// The agent-`n` view as a decentralized policy over one-hot observations.
    pub fn agent(&self, n: usize) -> AgentView<'_> {
        AgentView { policy: self, agent: n }
    }
}

pub struct AgentView<'a> {
    policy: &'a TabularPolicy,
    agent: usize,
}

impl ActionPolicy for AgentView<'_> {
    fn action_probabilities(&self, obs: &DecomposedObservation, _goal: &[f64]) -> Result<Vec<f64>> {
        let o = obs
            .self_part
            .iter()
            .position(|&v| v == 1.0)
            .ok_or_else(|| Error::InvalidArgument("observation is not one-hot".into()))?;
        let r = self.policy.row_for_obs(self.agent, o);
        let k = self.policy.action_sizes[self.agent];
        Ok(action_distribution(&self.policy.theta[r..r + k], self.policy.epsilon))
    }
}

/// Exact time-indexed tables for a fixed policy.
///
/// Index t counts steps already taken; tables at t = horizon are zero, and
/// every table is zero in terminal states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSolution {
    pub horizon: usize,
    pub discount: f64,
    /// `values[t][n][s]`.
    pub values: Vec<Vec<Vec<f64>>>,
    /// `joint_q[t][n][s][joint]`.
    pub joint_q: Vec<Vec<Vec<Vec<f64>>>>,
    /// `credit[t][n][m][s][aᵐ]`.
    pub credit: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    /// `agent_probs[m][s][aᵐ]`.
    pub agent_probs: Vec<Vec<Vec<f64>>>,
    /// `joint_probs[s][joint]`.
    pub joint_probs: Vec<Vec<f64>>,
}

/// Joint policy probability table from per-agent tables.
pub fn joint_prob_table(game: &ToyMatrixGame, agent_probs: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let sizes = game.action_sizes();
    (0..game.num_states)
        .map(|s| {
            (0..game.num_joint_actions())
                .map(|j| {
                    decode_joint_action(j, sizes)
                        .iter()
                        .enumerate()
                        .map(|(m, &a)| agent_probs[m][s][a])
                        .product()
                })
                .collect()
        })
        .collect()
}

/// π(a⁻ᵐ|s) for the joint action `joint`.
fn others_prob(agent_probs: &[Vec<Vec<f64>>], s: usize, actions: &[usize], m: usize) -> f64 {
    actions
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != m)
        .map(|(k, &a)| agent_probs[k][s][a])
        .product()
}

impl TabularSolution {
    pub fn num_agents(&self) -> usize {
        self.agent_probs.len()
    }

    /// Σ_{aᵐ} πᵐ(aᵐ|s) · credit_{n,m}(s, aᵐ) at step t.
    pub fn credit_baseline(&self, t: usize, n: usize, m: usize, s: usize) -> f64 {
        self.agent_probs[m][s]
            .iter()
            .zip(&self.credit[t][n][m][s])
            .map(|(p, q)| p * q)
            .sum()
    }
}

/// Exact values, joint action-values and credit functions by backward induction.
///
/// The three tables come from separate backups so the identities linking
/// them are checked rather than assumed.
pub fn solve_tabular(game: &ToyMatrixGame, policy: &TabularPolicy) -> Result<TabularSolution> {
    game.validate()?;
    if policy.action_sizes() != game.action_sizes() {
        return Err(Error::DimensionMismatch("policy and game action sizes differ".into()));
    }
    let n_agents = game.num_agents();
    let s_count = game.num_states;
    let joint = game.num_joint_actions();
    let sizes = game.action_sizes().to_vec();
    let horizon = game.horizon();
    let gamma = game.discount();
    let agent_probs = policy.prob_tables(s_count);
    let joint_probs = joint_prob_table(game, &agent_probs);
    let decoded: Vec<Vec<usize>> = (0..joint).map(|j| decode_joint_action(j, &sizes)).collect();

    let mut values = vec![vec![vec![0.0; s_count]; n_agents]; horizon + 1];
    let mut joint_q = vec![vec![vec![vec![0.0; joint]; s_count]; n_agents]; horizon + 1];
    let mut credit: Vec<Vec<Vec<Vec<Vec<f64>>>>> = (0..=horizon)
        .map(|_| {
            (0..n_agents)
                .map(|_| {
                    (0..n_agents)
                        .map(|m| vec![vec![0.0; sizes[m]]; s_count])
                        .collect()
                })
                .collect()
        })
        .collect();

    for t in (0..horizon).rev() {
        for n in 0..n_agents {
            // Expected next-step credit under agent m's policy, per state.
            let next_credit_mean: Vec<Vec<f64>> = (0..n_agents)
                .map(|m| {
                    (0..s_count)
                        .map(|s2| {
                            if game.terminal[s2] {
                                0.0
                            } else {
                                agent_probs[m][s2]
                                    .iter()
                                    .zip(&credit[t + 1][n][m][s2])
                                    .map(|(p, q)| p * q)
                                    .sum()
                            }
                        })
                        .collect()
                })
                .collect();
            for s in 0..s_count {
                if game.terminal[s] {
                    continue;
                }
                let mut v = 0.0;
                for j in 0..joint {
                    let r = game.reward(n, s, j);
                    let row = &game.transitions[s][j];
                    let mut tail_v = 0.0;
                    for (s2, &p) in row.iter().enumerate() {
                        if p > 0.0 && !game.terminal[s2] {
                            tail_v += p * values[t + 1][n][s2];
                        }
                    }
                    joint_q[t][n][s][j] = r + gamma * tail_v;
                    v += joint_probs[s][j] * (r + gamma * tail_v);
                    for m in 0..n_agents {
                        let mut tail_c = 0.0;
                        for (s2, &p) in row.iter().enumerate() {
                            if p > 0.0 {
                                tail_c += p * next_credit_mean[m][s2];
                            }
                        }
                        let w = others_prob(&agent_probs, s, &decoded[j], m);
                        credit[t][n][m][s][decoded[j][m]] += w * (r + gamma * tail_c);
                    }
                }
                values[t][n][s] = v;
            }
        }
    }

    Ok(TabularSolution {
        horizon,
        discount: gamma,
        values,
        joint_q,
        credit,
        agent_probs,
        joint_probs,
    })
}

/// Probability of being in each state at each step: `occupancy[t][s]`.
/// Mass that has entered a terminal state is dropped.
pub fn occupancy(game: &ToyMatrixGame, joint_probs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s_count = game.num_states;
    let mut rho = vec![vec![0.0; s_count]; game.horizon()];
    if game.horizon() == 0 {
        return rho;
    }
    rho[0] = game
        .initial
        .iter()
        .enumerate()
        .map(|(s, &p)| if game.terminal[s] { 0.0 } else { p })
        .collect();
    for t in 1..game.horizon() {
        let mut next = vec![0.0; s_count];
        for s in 0..s_count {
            let mass = rho[t - 1][s];
            if mass == 0.0 {
                continue;
            }
            for (j, &pj) in joint_probs[s].iter().enumerate() {
                for (s2, &p) in game.transitions[s][j].iter().enumerate() {
                    if !game.terminal[s2] {
                        next[s2] += mass * pj * p;
                    }
                }
            }
        }
        rho[t] = next;
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ToyShape;
    use crate::game::{joint_policy_probability, DecomposedState, MultiGoalGame};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain() -> ToyMatrixGame {
        // Three states in a deterministic cycle, reward 1 everywhere.
        let transitions = (0..3)
            .map(|s| {
                (0..2)
                    .map(|_| {
                        let mut row = vec![0.0; 3];
                        row[(s + 1) % 3] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        ToyMatrixGame::new(
            vec![2],
            transitions,
            vec![vec![vec![1.0; 2]; 3]],
            vec![0],
            vec![1.0, 0.0, 0.0],
            vec![false; 3],
            vec![vec![0, 1, 2]],
            0.5,
            4,
        )
        .unwrap()
    }

    #[test]
    fn chain_values_are_geometric_sums() {
        let game = chain();
        let policy = TabularPolicy::zeros(&game, false, 0.0).unwrap();
        let sol = solve_tabular(&game, &policy).unwrap();
        for t in 0..=4 {
            let remaining = 4 - t;
            let expected: f64 = (0..remaining).map(|k| 0.5f64.powi(k as i32)).sum();
            for s in 0..3 {
                assert!((sol.values[t][0][s] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_discount_q_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let game = ToyMatrixGame::random(&ToyShape::new(4, vec![2, 3], 3), &mut rng)
            .unwrap()
            .with_discount(0.0);
        let policy = TabularPolicy::random(&game, false, 0.1, 1.0, &mut rng).unwrap();
        let sol = solve_tabular(&game, &policy).unwrap();
        for n in 0..2 {
            for s in 0..4 {
                for j in 0..6 {
                    assert_eq!(sol.joint_q[0][n][s][j], game.reward(n, s, j));
                }
            }
        }
    }

    #[test]
    fn joint_distribution_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let game = ToyMatrixGame::random(&ToyShape::new(3, vec![2, 3, 2], 2), &mut rng).unwrap();
        let policy = TabularPolicy::random(&game, false, 0.05, 2.0, &mut rng).unwrap();
        let views: Vec<_> = (0..3).map(|n| policy.agent(n)).collect();
        let refs: Vec<&dyn ActionPolicy> = views.iter().map(|v| v as &dyn ActionPolicy).collect();
        let mut g = game.clone();
        for s in 0..3 {
            g.reset_with(s, &mut rng).unwrap();
            let obs = g.observations();
            let state: DecomposedState = g.state();
            let total: f64 = (0..12)
                .map(|j| {
                    let acts = decode_joint_action(j, &[2, 3, 2]);
                    joint_policy_probability(&refs, &state, &obs, g.goals(), &acts).unwrap()
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
            let table = joint_prob_table(&game, &policy.prob_tables(3));
            assert!((table[s].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_policy_rows_depend_on_goal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let game = ToyMatrixGame::random(&ToyShape::new(3, vec![2, 2], 2), &mut rng).unwrap();
        let policy = TabularPolicy::random(&game, true, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(policy.num_params(), 3 * 2 * 2);
        assert_ne!(policy.row(0, 1), policy.row(1, 1));
    }

    #[test]
    fn grad_log_prob_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let game = ToyMatrixGame::random(&ToyShape::new(2, vec![3], 2), &mut rng).unwrap();
        let policy = TabularPolicy::random(&game, false, 0.2, 1.0, &mut rng).unwrap();
        for (i, g) in policy.grad_log_prob(0, 1, 2) {
            let h = 1e-6;
            let mut up = policy.clone();
            up.theta[i] += h;
            let mut down = policy.clone();
            down.theta[i] -= h;
            let fd = (up.probs(0, 1)[2].ln() - down.probs(0, 1)[2].ln()) / (2.0 * h);
            assert!((fd - g).abs() < 1e-8);
        }
    }
}
