//! Small explicit games that can be enumerated exhaustively.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    decode_joint_action, encode_joint_action, one_hot, validate_actions, DecomposedObservation,
    DecomposedState, GameSpec, InputLayout, MultiGoalGame, StepResult,
};

const ROW_TOLERANCE: f64 = 1e-9;

/// A tabular multi-goal game.
///
/// Joint actions are mixed-radix indices with agent 0 least significant.
/// Entering a terminal state ends the episode; so does reaching the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyMatrixGame {
    spec: GameSpec,
    pub num_states: usize,
    /// `transitions[s][joint][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[goal][s][joint]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// Goal index held by each agent.
    pub assignment: Vec<usize>,
    pub initial: Vec<f64>,
    pub terminal: Vec<bool>,
    /// `observations[agent][s]` is the observation index agent sees in `s`.
    pub observations: Vec<Vec<usize>>,
    pub num_observations: Vec<usize>,
    /// Single-agent factors when the game is a product of independent MDPs.
    factors: Option<Vec<ToyMatrixGame>>,
    state: usize,
    t: usize,
    goals: Vec<Vec<f64>>,
}

/// Shape of a randomly generated game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyShape {
    pub num_states: usize,
    pub action_sizes: Vec<usize>,
    pub horizon: usize,
    pub discount: f64,
    /// Each (s, joint) row has at most this many successors.
    pub max_successors: usize,
    pub terminal_prob: f64,
    /// Agents observe `s mod num_observations` instead of `s` when set.
    pub num_observations: Option<usize>,
}

impl ToyShape {
    pub fn new(num_states: usize, action_sizes: Vec<usize>, horizon: usize) -> Self {
        Self {
            num_states,
            action_sizes,
            horizon,
            discount: 0.9,
            max_successors: num_states,
            terminal_prob: 0.0,
            num_observations: None,
        }
    }
}

fn dirichlet_row(len: usize, support: &[usize], rng: &mut dyn RngCore) -> Vec<f64> {
    let mut row = vec![0.0; len];
    let mut total = 0.0;
    for &s in support {
        let x: f64 = Exp1.sample(&mut *rng);
        row[s] = x + 1e-3;
        total += row[s];
    }
    for x in &mut row {
        *x /= total;
    }
    row
}

impl ToyMatrixGame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        action_sizes: Vec<usize>,
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        assignment: Vec<usize>,
        initial: Vec<f64>,
        terminal: Vec<bool>,
        observations: Vec<Vec<usize>>,
        discount: f64,
        horizon: usize,
    ) -> Result<Self> {
        let n = action_sizes.len();
        let num_states = transitions.len();
        let num_goals = rewards.len();
        let num_observations = observations
            .iter()
            .map(|o| o.iter().max().map_or(1, |m| m + 1))
            .collect();
        let game = Self {
            spec: GameSpec {
                num_agents: n,
                action_sizes,
                discount,
                horizon,
                goal_dim: num_goals,
            },
            num_states,
            transitions,
            rewards,
            goals: assignment.iter().map(|&g| one_hot(g.min(num_goals.max(1) - 1), num_goals.max(1))).collect(),
            assignment,
            initial,
            terminal,
            observations,
            num_observations,
            factors: None,
            state: 0,
            t: 0,
        };
        game.validate()?;
        Ok(game)
    }

    /// Checks shapes and that every transition row and the initial
    /// distribution are probability vectors.
    pub fn validate(&self) -> Result<()> {
        let n = self.spec.num_agents;
        let joint = self.spec.joint_action_count();
        let s_count = self.num_states;
        if n == 0 || s_count == 0 {
            return Err(Error::InvalidArgument("game needs agents and states".into()));
        }
        if self.assignment.len() != n || self.observations.len() != n {
            return Err(Error::DimensionMismatch("per-agent tables do not match agent count".into()));
        }
        if self.assignment.iter().any(|&g| g >= self.rewards.len()) {
            return Err(Error::IndexOutOfRange("goal assignment exceeds goal count".into()));
        }
        if self.initial.len() != s_count || self.terminal.len() != s_count {
            return Err(Error::DimensionMismatch("state tables have inconsistent sizes".into()));
        }
        for (s, rows) in self.transitions.iter().enumerate() {
            if rows.len() != joint {
                return Err(Error::DimensionMismatch(format!(
                    "state {s} has {} joint-action rows, expected {joint}",
                    rows.len()
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != s_count {
                    return Err(Error::DimensionMismatch(format!("row ({s}, {a}) has wrong length")));
                }
                check_distribution(row, &format!("transition row ({s}, {a})"))?;
            }
        }
        check_distribution(&self.initial, "initial distribution")?;
        for table in &self.rewards {
            if table.len() != s_count || table.iter().any(|r| r.len() != joint) {
                return Err(Error::DimensionMismatch("reward table has wrong shape".into()));
            }
        }
        for obs in &self.observations {
            if obs.len() != s_count {
                return Err(Error::DimensionMismatch("observation map has wrong length".into()));
            }
        }
        Ok(())
    }

    /// A random game with Dirichlet transition rows and rewards uniform in [−1, 1].
    /// Every agent holds its own goal.
    pub fn random(shape: &ToyShape, rng: &mut dyn RngCore) -> Result<Self> {
        let n = shape.action_sizes.len();
        let s_count = shape.num_states;
        let joint: usize = shape.action_sizes.iter().product();
        let k = shape.max_successors.clamp(1, s_count);
        let transitions = (0..s_count)
            .map(|_| {
                (0..joint)
                    .map(|_| {
                        let support = rand::seq::index::sample(&mut *rng, s_count, k).into_vec();
                        dirichlet_row(s_count, &support, rng)
                    })
                    .collect()
            })
            .collect();
        let rewards = (0..n)
            .map(|_| {
                (0..s_count)
                    .map(|_| (0..joint).map(|_| rng.random_range(-1.0..=1.0)).collect())
                    .collect()
            })
            .collect();
        let mut terminal: Vec<bool> = (0..s_count)
            .map(|_| rng.random::<f64>() < shape.terminal_prob)
            .collect();
        terminal[0] = false;
        let initial_support: Vec<usize> = (0..s_count).filter(|&s| !terminal[s]).collect();
        let initial = dirichlet_row(s_count, &initial_support, rng);
        let observations = (0..n)
            .map(|_| {
                (0..s_count)
                    .map(|s| shape.num_observations.map_or(s, |m| s % m.max(1)))
                    .collect()
            })
            .collect();
        Self::new(
            shape.action_sizes.clone(),
            transitions,
            rewards,
            (0..n).collect(),
            initial,
            terminal,
            observations,
            shape.discount,
            shape.horizon,
        )
    }

    /// Product of independent single-agent games. Agent n acts only in
    /// factor n, observes only its own factor state, and holds goal n whose
    /// reward depends only on that factor. Factors must have no terminal states.
    pub fn decoupled(factors: Vec<ToyMatrixGame>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("no factors".into()));
        }
        for f in &factors {
            if f.spec.num_agents != 1 || f.terminal.iter().any(|&t| t) {
                return Err(Error::InvalidArgument(
                    "factors must be single-agent games without terminal states".into(),
                ));
            }
        }
        let n = factors.len();
        let sizes: Vec<usize> = factors.iter().map(|f| f.num_states).collect();
        let action_sizes: Vec<usize> = factors.iter().map(|f| f.spec.action_sizes[0]).collect();
        let s_count: usize = sizes.iter().product();
        let joint: usize = action_sizes.iter().product();
        let discount = factors[0].spec.discount;
        let horizon = factors[0].spec.horizon;
        let mut transitions = vec![vec![vec![0.0; s_count]; joint]; s_count];
        let mut rewards = vec![vec![vec![0.0; joint]; s_count]; n];
        let mut initial = vec![0.0; s_count];
        let mut observations = vec![vec![0; s_count]; n];
        for s in 0..s_count {
            let locals = decode_joint_action(s, &sizes);
            initial[s] = factors
                .iter()
                .zip(&locals)
                .map(|(f, &l)| f.initial[l])
                .product();
            for k in 0..n {
                observations[k][s] = locals[k];
            }
            for a in 0..joint {
                let acts = decode_joint_action(a, &action_sizes);
                for k in 0..n {
                    let f = &factors[k];
                    rewards[k][s][a] = f.rewards[f.assignment[0]][locals[k]][acts[k]];
                }
                for next in 0..s_count {
                    let next_locals = decode_joint_action(next, &sizes);
                    transitions[s][a][next] = (0..n)
                        .map(|k| factors[k].transitions[locals[k]][acts[k]][next_locals[k]])
                        .product();
                }
            }
        }
        let mut game = Self::new(
            action_sizes,
            transitions,
            rewards,
            (0..n).collect(),
            initial,
            vec![false; s_count],
            observations,
            discount,
            horizon,
        )?;
        game.factors = Some(factors);
        Ok(game)
    }

    pub fn num_agents(&self) -> usize {
        self.spec.num_agents
    }

    pub fn action_sizes(&self) -> &[usize] {
        &self.spec.action_sizes
    }

    pub fn num_joint_actions(&self) -> usize {
        self.spec.joint_action_count()
    }

    pub fn num_goals(&self) -> usize {
        self.rewards.len()
    }

    pub fn discount(&self) -> f64 {
        self.spec.discount
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    /// Rⁿ(s, a⃗) for the goal held by agent `n`.
    pub fn reward(&self, n: usize, s: usize, joint: usize) -> f64 {
        self.rewards[self.assignment[n]][s][joint]
    }

    pub fn current_state(&self) -> usize {
        self.state
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        encode_joint_action(actions, &self.spec.action_sizes)
    }

    /// Copy with every agent holding a different goal assignment.
    pub fn with_assignment(&self, assignment: Vec<usize>) -> Result<Self> {
        let mut g = self.clone();
        g.goals = assignment.iter().map(|&k| one_hot(k.min(g.num_goals() - 1), g.num_goals())).collect();
        g.assignment = assignment;
        g.validate()?;
        Ok(g)
    }

    /// Copy with a different discount.
    pub fn with_discount(&self, discount: f64) -> Self {
        let mut g = self.clone();
        g.spec.discount = discount;
        g
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::NonStochastic(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::NonStochastic(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl MultiGoalGame for ToyMatrixGame {
    type Assignment = usize;

    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn layout(&self) -> InputLayout {
        InputLayout {
            env_state: self.num_states,
            agent_state: 0,
            obs_self: self.num_observations.iter().copied().max().unwrap_or(1),
            obs_others: 0,
            goal: self.num_goals(),
            num_actions: self.spec.action_sizes.iter().copied().max().unwrap_or(1),
            critic_uses_self_obs: false,
            critic_side_uses_goals: false,
        }
    }

    fn sample_assignment(&self, rng: &mut dyn RngCore) -> usize {
        sample_index(&self.initial, rng)
    }

    fn assignment_goals(&self, _: &usize) -> Vec<Vec<f64>> {
        self.goals.clone()
    }

    fn reset_with(&mut self, initial_state: usize, _rng: &mut dyn RngCore) -> Result<()> {
        if initial_state >= self.num_states {
            return Err(Error::IndexOutOfRange(format!("state {initial_state}")));
        }
        self.state = initial_state;
        self.t = 0;
        Ok(())
    }

    fn state(&self) -> DecomposedState {
        DecomposedState {
            env_part: one_hot(self.state, self.num_states),
            agent_parts: vec![vec![]; self.spec.num_agents],
        }
    }

    fn observe(&self, agent: usize) -> DecomposedObservation {
        let width = self.num_observations.iter().copied().max().unwrap_or(1);
        DecomposedObservation {
            self_part: one_hot(self.observations[agent][self.state], width),
            others_part: vec![],
        }
    }

    fn goals(&self) -> &[Vec<f64>] {
        &self.goals
    }

    fn step(&mut self, actions: &[usize], rng: &mut dyn RngCore) -> Result<StepResult> {
        validate_actions(&self.spec, actions)?;
        let joint = self.joint_index(actions);
        let s = self.state;
        let rewards = (0..self.spec.num_agents)
            .map(|n| self.reward(n, s, joint))
            .collect();
        self.state = sample_index(&self.transitions[s][joint], rng);
        self.t += 1;
        let terminal = self.terminal[self.state];
        let timeout = !terminal && self.t >= self.spec.horizon;
        Ok(StepResult {
            rewards,
            terminal,
            timeout,
            success: terminal,
        })
    }

    fn induce(&self) -> Result<Self> {
        match &self.factors {
            Some(f) => Ok(f[0].clone()),
            None => Err(Error::UnsupportedReduction(
                "tabular game with coupled dynamics".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut shape = ToyShape::new(6, vec![2, 3], 4);
        shape.max_successors = 2;
        shape.terminal_prob = 0.3;
        let game = ToyMatrixGame::random(&shape, &mut rng).unwrap();
        for rows in &game.transitions {
            for row in rows {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().filter(|&&p| p > 0.0).count() <= 2);
            }
        }
        assert!(!game.terminal[0]);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = ToyMatrixGame::new(
            vec![1],
            vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]],
            vec![vec![vec![0.0]; 2]],
            vec![0],
            vec![1.0, 0.0],
            vec![false; 2],
            vec![vec![0, 1]],
            0.9,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonStochastic(_)));
    }

    #[test]
    fn decoupled_product_and_induce() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shape = ToyShape::new(2, vec![2], 3);
        let a = ToyMatrixGame::random(&shape, &mut rng).unwrap();
        let b = ToyMatrixGame::random(&shape, &mut rng).unwrap();
        let game = ToyMatrixGame::decoupled(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(game.num_states, 4);
        assert_eq!(game.num_joint_actions(), 4);
        // State 3 = (1, 1); joint action 2 = (0, 1).
        let expected = a.transitions[1][0][0] * b.transitions[1][1][1];
        assert!((game.transitions[3][2][2] - expected).abs() < 1e-15);
        assert_eq!(game.reward(1, 3, 2), b.rewards[0][1][1]);
        let induced = game.induce().unwrap();
        assert_eq!(induced.num_agents(), 1);
        assert_eq!(induced.transitions, a.transitions);
    }

    #[test]
    fn coupled_game_is_irreducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let game = ToyMatrixGame::random(&ToyShape::new(3, vec![2, 2], 2), &mut rng).unwrap();
        assert!(matches!(game.induce(), Err(Error::UnsupportedReduction(_))));
    }

    #[test]
    fn stepping_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let game = ToyMatrixGame::random(&ToyShape::new(5, vec![2, 2], 6), &mut rng).unwrap();
        let run = |seed| {
            let mut g = game.clone();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            g.reset(&mut r).unwrap();
            let mut states = vec![g.current_state()];
            for k in 0..6 {
                g.step(&[k % 2, (k / 2) % 2], &mut r).unwrap();
                states.push(g.current_state());
            }
            states
        };
        assert_eq!(run(9), run(9));
    }
}
