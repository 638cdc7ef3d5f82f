//! The multi-goal Markov game contract.
//!
//! Every environment exposes its state split into an environment part and
//! one part per agent, and each agent's observation split into what it sees
//! of itself and what it sees of the others. The approximators wire their
//! Stage-2 augmentation inputs from these splits, so environments must
//! provide them explicitly.

use std::fmt::Debug;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of a game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub num_agents: usize,
    /// |Aⁿ| for every agent.
    pub action_sizes: Vec<usize>,
    pub discount: f64,
    /// Maximum number of steps per episode.
    pub horizon: usize,
    /// Length of a goal encoding.
    pub goal_dim: usize,
}

impl GameSpec {
    pub fn num_actions(&self, agent: usize) -> usize {
        self.action_sizes[agent]
    }

    /// Number of joint actions |A¹|·…·|Aᴺ|.
    pub fn joint_action_count(&self) -> usize {
        self.action_sizes.iter().product()
    }
}

/// Feature widths the approximators need to size their inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub env_state: usize,
    pub agent_state: usize,
    pub obs_self: usize,
    pub obs_others: usize,
    pub goal: usize,
    pub num_actions: usize,
    /// Critic main inputs also carry the agent's own observation.
    pub critic_uses_self_obs: bool,
    /// Critic side branches also carry the other agents' goals.
    pub critic_side_uses_goals: bool,
}

/// s = (s_env, s¹, …, sᴺ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedState {
    pub env_part: Vec<f64>,
    pub agent_parts: Vec<Vec<f64>>,
}

impl DecomposedState {
    pub fn num_agents(&self) -> usize {
        self.agent_parts.len()
    }

    /// The full state vector: env part followed by agent parts in agent order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.env_part.clone();
        for part in &self.agent_parts {
            out.extend_from_slice(part);
        }
        out
    }

    /// s⁻ⁿ: every agent part except agent `n`, in agent order.
    pub fn others(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, part) in self.agent_parts.iter().enumerate() {
            if k != n {
                out.extend_from_slice(part);
            }
        }
        out
    }
}

/// oⁿ = (oⁿ_self, oⁿ_others).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedObservation {
    pub self_part: Vec<f64>,
    pub others_part: Vec<f64>,
}

/// One replay record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: DecomposedState,
    pub observations: Vec<DecomposedObservation>,
    pub goals: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_state: DecomposedState,
    pub next_observations: Vec<DecomposedObservation>,
    /// No bootstrapping past this transition.
    pub terminal: bool,
}

/// What a single environment step returns.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Rⁿ for every agent, evaluated against that agent's goal.
    pub rewards: Vec<f64>,
    /// The termination predicate fired after applying the joint action.
    pub terminal: bool,
    /// The horizon was exhausted without termination.
    pub timeout: bool,
    /// Environment-defined episode success, meaningful once the episode ends.
    pub success: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.timeout
    }
}

pub trait MultiGoalGame: Clone + Send {
    /// Initial configuration and goals for one episode.
    type Assignment: Clone + Debug;

    fn spec(&self) -> &GameSpec;

    fn layout(&self) -> InputLayout;

    /// Draw an episode assignment from the game's declared distribution.
    fn sample_assignment(&self, rng: &mut dyn RngCore) -> Self::Assignment;

    /// Goal encodings gⁿ of an assignment.
    fn assignment_goals(&self, assignment: &Self::Assignment) -> Vec<Vec<f64>>;

    fn reset_with(&mut self, assignment: Self::Assignment, rng: &mut dyn RngCore) -> Result<()>;

    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        let assignment = self.sample_assignment(rng);
        self.reset_with(assignment, rng)
    }

    fn state(&self) -> DecomposedState;

    /// Observation of agent `agent` with the environment's normalization applied.
    fn observe(&self, agent: usize) -> DecomposedObservation;

    fn observations(&self) -> Vec<DecomposedObservation> {
        (0..self.spec().num_agents).map(|n| self.observe(n)).collect()
    }

    /// Goals fixed at the last reset.
    fn goals(&self) -> &[Vec<f64>];

    /// Apply one action per agent.
    fn step(&mut self, actions: &[usize], rng: &mut dyn RngCore) -> Result<StepResult>;

    /// The single-agent game with all interaction terms removed.
    fn induce(&self) -> Result<Self>;

    /// Which built-in environment this is, for picking network shapes.
    fn kind(&self) -> Option<crate::env::EnvKind> {
        None
    }
}

/// Reduce a game to its single-agent MDP.
pub fn induce_single_agent_mdp<G: MultiGoalGame>(game: &G) -> Result<G> {
    let induced = game.induce()?;
    if induced.spec().num_agents != 1 {
        return Err(Error::UnsupportedReduction(format!(
            "reduction produced {} agents",
            induced.spec().num_agents
        )));
    }
    Ok(induced)
}

/// Checks the action count against the spec; environments call this first in `step`.
pub(crate) fn validate_actions(spec: &GameSpec, actions: &[usize]) -> Result<()> {
    if actions.len() != spec.num_agents {
        return Err(Error::DimensionMismatch(format!(
            "expected {} actions, got {}",
            spec.num_agents,
            actions.len()
        )));
    }
    for (n, (&a, &size)) in actions.iter().zip(&spec.action_sizes).enumerate() {
        if a >= size {
            return Err(Error::IndexOutOfRange(format!(
                "action {a} for agent {n} with {size} actions"
            )));
        }
    }
    Ok(())
}

/// A decentralized policy πⁿ(·|oⁿ, gⁿ).
pub trait ActionPolicy {
    fn action_probabilities(&self, obs: &DecomposedObservation, goal: &[f64]) -> Result<Vec<f64>>;
}

/// π(a⃗|s, g⃗) = ∏ₙ πⁿ(aⁿ|oⁿ, gⁿ).
pub fn joint_policy_probability(
    policies: &[&dyn ActionPolicy],
    state: &DecomposedState,
    observations: &[DecomposedObservation],
    goals: &[Vec<f64>],
    joint_action: &[usize],
) -> Result<f64> {
    let n = policies.len();
    if state.num_agents() != n
        || observations.len() != n
        || goals.len() != n
        || joint_action.len() != n
    {
        return Err(Error::DimensionMismatch(format!(
            "{} policies for {} agents ({} observations, {} goals, {} actions)",
            n,
            state.num_agents(),
            observations.len(),
            goals.len(),
            joint_action.len()
        )));
    }
    let mut prob = 1.0;
    for (k, policy) in policies.iter().enumerate() {
        let probs = policy.action_probabilities(&observations[k], &goals[k])?;
        let a = joint_action[k];
        let p = *probs.get(a).ok_or_else(|| {
            Error::IndexOutOfRange(format!("action {a} for agent {k} with {} actions", probs.len()))
        })?;
        prob *= p;
        if prob == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(prob)
}

/// Decode a mixed-radix joint action index (agent 0 least significant).
pub fn decode_joint_action(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .map(|&size| {
            let a = index % size;
            index /= size;
            a
        })
        .collect()
}

pub fn encode_joint_action(actions: &[usize], sizes: &[usize]) -> usize {
    let mut index = 0;
    let mut stride = 1;
    for (&a, &size) in actions.iter().zip(sizes) {
        index += a * stride;
        stride *= size;
    }
    index
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}
