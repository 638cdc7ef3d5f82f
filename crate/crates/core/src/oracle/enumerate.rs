//! Exhaustive trajectory enumeration, finite differences, and exact
//! expectations of the policy-gradient estimators.

use serde::{Deserialize, Serialize};

use crate::env::ToyMatrixGame;
use crate::error::{Error, Result};
use crate::game::decode_joint_action;
use crate::gradients::{self, Estimator};

use super::tabular::{occupancy, solve_tabular, TabularPolicy, TabularSolution};

pub const DEFAULT_TRAJECTORY_BOUND: u64 = 1_000_000;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    /// J = Σ_n J_n.
    pub objective: f64,
    pub per_goal: Vec<f64>,
    pub gradient: Vec<f64>,
    pub per_goal_gradient: Vec<Vec<f64>>,
    pub trajectories: u64,
}

impl ObjectiveReport {
    /// Agent n's own parameters differentiated through its own goal only.
    pub fn own_goal_gradient(&self, policy: &TabularPolicy) -> Vec<f64> {
        let mut out = vec![0.0; policy.num_params()];
        for n in 0..policy.num_agents() {
            for i in policy.agent_params(n) {
                out[i] += self.per_goal_gradient[n][i];
            }
        }
        out
    }
}

struct Walker<'a> {
    game: &'a ToyMatrixGame,
    policy: &'a TabularPolicy,
    probs: Vec<Vec<Vec<f64>>>,
    decoded: Vec<Vec<usize>>,
    bound: u64,
    count: u64,
    report: ObjectiveReport,
}

impl Walker<'_> {
    fn leaf(&mut self, prob: f64, returns: &[f64], score: &[f64]) -> Result<()> {
        self.count += 1;
        if self.count > self.bound {
            return Err(Error::BoundExceeded(self.bound));
        }
        for (n, &ret) in returns.iter().enumerate() {
            self.report.per_goal[n] += prob * ret;
            for (g, &z) in self.report.per_goal_gradient[n].iter_mut().zip(score) {
                *g += prob * ret * z;
            }
        }
        Ok(())
    }

    fn walk(&mut self, t: usize, s: usize, prob: f64, returns: &mut [f64], score: &mut [f64]) -> Result<()> {
        if t == self.game.horizon() || self.game.terminal[s] {
            return self.leaf(prob, returns, score);
        }
        let discount = self.game.discount().powi(t as i32);
        for j in 0..self.decoded.len() {
            let acts = self.decoded[j].clone();
            let pa: f64 = acts.iter().enumerate().map(|(m, &a)| self.probs[m][s][a]).product();
            if pa == 0.0 {
                continue;
            }
            let mut touched = Vec::new();
            for (m, &a) in acts.iter().enumerate() {
                for (i, v) in self.policy.grad_log_prob(m, s, a) {
                    score[i] += v;
                    touched.push((i, v));
                }
            }
            for (n, r) in returns.iter_mut().enumerate() {
                *r += discount * self.game.reward(n, s, j);
            }
            for s2 in 0..self.game.num_states {
                let p = self.game.transitions[s][j][s2];
                if p > 0.0 {
                    self.walk(t + 1, s2, prob * pa * p, returns, score)?;
                }
            }
            for (n, r) in returns.iter_mut().enumerate() {
                *r -= discount * self.game.reward(n, s, j);
            }
            for (i, v) in touched {
                score[i] -= v;
            }
        }
        Ok(())
    }
}

/// J and ∇J by summing P(τ)·return(τ) and P(τ)·return(τ)·∇log P(τ) over
/// every trajectory. Fails with `BoundExceeded` once more than `bound`
/// trajectories have been visited.
pub fn exact_objective_and_gradient(
    game: &ToyMatrixGame,
    policy: &TabularPolicy,
    bound: u64,
) -> Result<ObjectiveReport> {
    game.validate()?;
    let n_agents = game.num_agents();
    let k = policy.num_params();
    let mut walker = Walker {
        game,
        policy,
        probs: policy.prob_tables(game.num_states),
        decoded: (0..game.num_joint_actions())
            .map(|j| decode_joint_action(j, game.action_sizes()))
            .collect(),
        bound,
        count: 0,
        report: ObjectiveReport {
            objective: 0.0,
            per_goal: vec![0.0; n_agents],
            gradient: vec![0.0; k],
            per_goal_gradient: vec![vec![0.0; k]; n_agents],
            trajectories: 0,
        },
    };
    let mut returns = vec![0.0; n_agents];
    let mut score = vec![0.0; k];
    for s0 in 0..game.num_states {
        let p0 = game.initial[s0];
        if p0 > 0.0 {
            walker.walk(0, s0, p0, &mut returns, &mut score)?;
        }
    }
    let mut report = walker.report;
    report.trajectories = walker.count;
    report.objective = report.per_goal.iter().sum();
    for g in &report.per_goal_gradient {
        for (acc, v) in report.gradient.iter_mut().zip(g) {
            *acc += v;
        }
    }
    Ok(report)
}

/// Σ_s p₀(s)·V_n(s) at step zero, from dynamic programming.
pub fn goal_objectives(game: &ToyMatrixGame, policy: &TabularPolicy) -> Result<Vec<f64>> {
    let sol = solve_tabular(game, policy)?;
    Ok((0..game.num_agents())
        .map(|n| {
            game.initial
                .iter()
                .enumerate()
                .map(|(s, p)| p * sol.values[0][n][s])
                .sum()
        })
        .collect())
}

/// Central differences of `objective` with respect to every parameter.
pub fn finite_difference_gradient<F>(policy: &TabularPolicy, step: f64, mut objective: F) -> Result<Vec<f64>>
where
    F: FnMut(&TabularPolicy) -> Result<f64>,
{
    let mut probe = policy.clone();
    let mut grad = Vec::with_capacity(policy.num_params());
    for i in 0..policy.num_params() {
        let base = probe.theta[i];
        probe.theta[i] = base + step;
        let up = objective(&probe)?;
        probe.theta[i] = base - step;
        let down = objective(&probe)?;
        probe.theta[i] = base;
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Finite-difference gradient of the objective each estimator targets:
/// Σ_n J_n for CM3, COMA and QV; for IAC, agent n's block of ∇J_n.
pub fn target_gradient(game: &ToyMatrixGame, policy: &TabularPolicy, estimator: Estimator, step: f64) -> Result<Vec<f64>> {
    match estimator {
        Estimator::Iac => {
            let mut out = vec![0.0; policy.num_params()];
            for n in 0..game.num_agents() {
                let g = finite_difference_gradient(policy, step, |p| Ok(goal_objectives(game, p)?[n]))?;
                for i in policy.agent_params(n) {
                    out[i] += g[i];
                }
            }
            Ok(out)
        }
        _ => finite_difference_gradient(policy, step, |p| Ok(goal_objectives(game, p)?.iter().sum())),
    }
}

/// One score-function term: `weight`·∇log π^agent(a^agent). `goal` is the
/// goal index for per-goal estimators and `None` for COMA's summed critic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTerm {
    pub agent: usize,
    pub goal: Option<usize>,
    pub weight: f64,
}

/// Terms of one estimator sample at step t, state s, joint action `joint`,
/// using exact critics from `sol`.
pub fn score_terms(
    estimator: Estimator,
    game: &ToyMatrixGame,
    sol: &TabularSolution,
    t: usize,
    s: usize,
    joint: usize,
) -> Vec<ScoreTerm> {
    let n_agents = game.num_agents();
    let sizes = game.action_sizes();
    let acts = decode_joint_action(joint, sizes);
    let mut terms = Vec::new();
    match estimator {
        Estimator::Cm3 => {
            for n in 0..n_agents {
                for m in 0..n_agents {
                    let w = gradients::cm3_advantage(
                        sol.joint_q[t][n][s][joint],
                        &sol.credit[t][n][m][s],
                        &sol.agent_probs[m][s],
                    );
                    terms.push(ScoreTerm { agent: m, goal: Some(n), weight: w });
                }
            }
        }
        Estimator::Coma => {
            let total = |j: usize| (0..n_agents).map(|n| sol.joint_q[t][n][s][j]).sum::<f64>();
            for m in 0..n_agents {
                let row: Vec<f64> = (0..sizes[m])
                    .map(|b| {
                        let mut alt = acts.clone();
                        alt[m] = b;
                        total(game.joint_index(&alt))
                    })
                    .collect();
                let w = gradients::counterfactual_advantage(&row, &sol.agent_probs[m][s], acts[m]);
                terms.push(ScoreTerm { agent: m, goal: None, weight: w });
            }
        }
        Estimator::Qv => {
            for n in 0..n_agents {
                let v = (0..n_agents)
                    .map(|k| sol.credit_baseline(t, n, k, s))
                    .sum::<f64>()
                    / n_agents as f64;
                let w = gradients::qv_advantage(sol.joint_q[t][n][s][joint], v);
                for m in 0..n_agents {
                    terms.push(ScoreTerm { agent: m, goal: Some(n), weight: w });
                }
            }
        }
        Estimator::Iac => {
            for n in 0..n_agents {
                let r = game.reward(n, s, joint);
                let w: f64 = game.transitions[s][joint]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s2, &p)| {
                        p * gradients::td_error(
                            r,
                            sol.discount,
                            sol.values[t + 1][n][s2],
                            sol.values[t][n][s],
                            game.terminal[s2],
                        )
                    })
                    .sum();
                terms.push(ScoreTerm { agent: n, goal: Some(n), weight: w });
            }
        }
    }
    terms
}

/// Dense ∇log π^agent(a) in state s.
pub fn score_vector(policy: &TabularPolicy, agent: usize, s: usize, action: usize) -> Vec<f64> {
    let mut z = vec![0.0; policy.num_params()];
    for (i, v) in policy.grad_log_prob(agent, s, action) {
        z[i] += v;
    }
    z
}

/// Σ_terms weight·∇log π^agent for one sample.
pub fn sample_gradient(
    estimator: Estimator,
    game: &ToyMatrixGame,
    policy: &TabularPolicy,
    sol: &TabularSolution,
    t: usize,
    s: usize,
    joint: usize,
) -> Vec<f64> {
    let acts = decode_joint_action(joint, game.action_sizes());
    let mut g = vec![0.0; policy.num_params()];
    for term in score_terms(estimator, game, sol, t, s, joint) {
        for (i, v) in policy.grad_log_prob(term.agent, s, acts[term.agent]) {
            g[i] += term.weight * v;
        }
    }
    g
}

/// Discounted step-state weights γᵗρ_t(s) under the policy.
pub fn discounted_occupancy(game: &ToyMatrixGame, sol: &TabularSolution) -> Vec<Vec<f64>> {
    let rho = occupancy(game, &sol.joint_probs);
    rho.into_iter()
        .enumerate()
        .map(|(t, row)| {
            let d = game.discount().powi(t as i32);
            row.into_iter().map(|p| p * d).collect()
        })
        .collect()
}

/// Exact expectation Σ_t Σ_s γᵗρ_t(s) Σ_a⃗ π(a⃗|s)·sample(t, s, a⃗).
pub fn expected_estimator(game: &ToyMatrixGame, policy: &TabularPolicy, estimator: Estimator) -> Result<Vec<f64>> {
    let sol = solve_tabular(game, policy)?;
    let weights = discounted_occupancy(game, &sol);
    let mut out = vec![0.0; policy.num_params()];
    for (t, row) in weights.iter().enumerate() {
        for (s, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for j in 0..game.num_joint_actions() {
                let p = w * sol.joint_probs[s][j];
                if p == 0.0 {
                    continue;
                }
                for (acc, v) in out.iter_mut().zip(sample_gradient(estimator, game, policy, &sol, t, s, j)) {
                    *acc += p * v;
                }
            }
        }
    }
    Ok(out)
}

/// max |a − b| / max(max |b|, 1e−12).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
