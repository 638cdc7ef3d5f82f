//! Input vectors for the policy, critic, value and COMA networks.
//!
//! Every network input is assembled here so the architecture presets and
//! the training code agree on the ordering.

use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::game::{one_hot, DecomposedObservation, DecomposedState, InputLayout};
use crate::nn::{AugmentableNet, Tape};

/// Row-major input matrices for one batched network evaluation.
#[derive(Debug, Clone, Default)]
pub struct RowBatch {
    main: Vec<f64>,
    aug: Vec<f64>,
    main_len: usize,
    aug_len: usize,
    rows: usize,
}

impl RowBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, main: Vec<f64>, aug: Option<Vec<f64>>) {
        if self.rows == 0 {
            self.main_len = main.len();
            self.aug_len = aug.as_ref().map_or(0, Vec::len);
        }
        debug_assert_eq!(main.len(), self.main_len);
        self.main.extend(main);
        if let Some(a) = aug {
            debug_assert_eq!(a.len(), self.aug_len);
            self.aug.extend(a);
        }
        self.rows += 1;
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    fn views(&self) -> (ArrayView2<'_, f64>, Option<ArrayView2<'_, f64>>) {
        let main = ArrayView2::from_shape((self.rows, self.main_len), &self.main).expect("rows are uniform");
        let aug = (self.aug.len() == self.rows * self.aug_len && !self.aug.is_empty())
            .then(|| ArrayView2::from_shape((self.rows, self.aug_len), &self.aug).expect("rows are uniform"));
        (main, aug)
    }

    pub fn forward(&self, net: &AugmentableNet) -> Result<(Array2<f64>, Tape)> {
        let (main, aug) = self.views();
        net.forward(main, aug)
    }

    pub fn predict(&self, net: &AugmentableNet) -> Result<Array2<f64>> {
        Ok(self.forward(net)?.0)
    }
}

/// Policy main input: [o_self | g].
pub fn policy_main(obs: &DecomposedObservation, goal: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(obs.self_part.len() + goal.len());
    v.extend_from_slice(&obs.self_part);
    v.extend_from_slice(goal);
    v
}

pub fn policy_main_len(layout: &InputLayout) -> usize {
    layout.obs_self + layout.goal
}

/// Policy augmentation input: o_others.
pub fn policy_aug(obs: &DecomposedObservation) -> Vec<f64> {
    obs.others_part.clone()
}

/// Critic main input for goal n and one agent's action:
/// [s_env | sⁿ | oⁿ_self if used | gⁿ | onehot(action)].
pub fn critic_main(
    layout: &InputLayout,
    state: &DecomposedState,
    obs_n: &DecomposedObservation,
    n: usize,
    goal_n: &[f64],
    action: usize,
) -> Vec<f64> {
    let mut v = Vec::with_capacity(critic_main_len(layout));
    v.extend_from_slice(&state.env_part);
    v.extend_from_slice(&state.agent_parts[n]);
    if layout.critic_uses_self_obs {
        v.extend_from_slice(&obs_n.self_part);
    }
    v.extend_from_slice(goal_n);
    v.extend(one_hot(action, layout.num_actions));
    v
}

pub fn critic_main_len(layout: &InputLayout) -> usize {
    layout.env_state
        + layout.agent_state
        + if layout.critic_uses_self_obs { layout.obs_self } else { 0 }
        + layout.goal
        + layout.num_actions
}

fn push_other_goals(v: &mut Vec<f64>, goals: &[Vec<f64>], n: usize) {
    for (k, g) in goals.iter().enumerate() {
        if k != n {
            v.extend_from_slice(g);
        }
    }
}

/// Global critic augmentation input: [s⁻ⁿ | onehot(a⁻ⁿ) | g⁻ⁿ if used].
pub fn global_aug(
    layout: &InputLayout,
    state: &DecomposedState,
    n: usize,
    actions: &[usize],
    goals: &[Vec<f64>],
) -> Vec<f64> {
    let mut v = state.others(n);
    for (k, &a) in actions.iter().enumerate() {
        if k != n {
            v.extend(one_hot(a, layout.num_actions));
        }
    }
    if layout.critic_side_uses_goals {
        push_other_goals(&mut v, goals, n);
    }
    v
}

pub fn global_aug_len(layout: &InputLayout, num_agents: usize) -> usize {
    let others = num_agents - 1;
    others * (layout.agent_state + layout.num_actions)
        + if layout.critic_side_uses_goals { others * layout.goal } else { 0 }
}

/// Credit function augmentation input: [sᵐ | s⁻ⁿ | g⁻ⁿ if used].
pub fn credit_aug(
    layout: &InputLayout,
    state: &DecomposedState,
    n: usize,
    m: usize,
    goals: &[Vec<f64>],
) -> Vec<f64> {
    let mut v = state.agent_parts[m].clone();
    v.extend(state.others(n));
    if layout.critic_side_uses_goals {
        push_other_goals(&mut v, goals, n);
    }
    v
}

pub fn credit_aug_len(layout: &InputLayout, num_agents: usize) -> usize {
    let others = num_agents - 1;
    layout.agent_state
        + others * layout.agent_state
        + if layout.critic_side_uses_goals { others * layout.goal } else { 0 }
}

/// COMA critic input for agent n:
/// [s | onehot(a⁻ⁿ) | gⁿ | g⁻ⁿ | onehot(n) | oⁿ_self].
pub fn coma_main(
    layout: &InputLayout,
    state: &DecomposedState,
    obs_n: &DecomposedObservation,
    n: usize,
    actions: &[usize],
    goals: &[Vec<f64>],
) -> Vec<f64> {
    let num_agents = goals.len();
    let mut v = state.flatten();
    for (k, &a) in actions.iter().enumerate() {
        if k != n {
            v.extend(one_hot(a, layout.num_actions));
        }
    }
    v.extend_from_slice(&goals[n]);
    push_other_goals(&mut v, goals, n);
    v.extend(one_hot(n, num_agents));
    v.extend_from_slice(&obs_n.self_part);
    v
}

pub fn coma_main_len(layout: &InputLayout, num_agents: usize) -> usize {
    layout.env_state
        + num_agents * layout.agent_state
        + (num_agents - 1) * layout.num_actions
        + num_agents * layout.goal
        + num_agents
        + layout.obs_self
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(goals: bool, self_obs: bool) -> InputLayout {
        InputLayout {
            env_state: 1,
            agent_state: 2,
            obs_self: 3,
            obs_others: 2,
            goal: 2,
            num_actions: 3,
            critic_uses_self_obs: self_obs,
            critic_side_uses_goals: goals,
        }
    }

    fn state() -> DecomposedState {
        DecomposedState {
            env_part: vec![9.0],
            agent_parts: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        }
    }

    fn obs() -> DecomposedObservation {
        DecomposedObservation {
            self_part: vec![7.0, 7.5, 8.0],
            others_part: vec![0.5, 0.25],
        }
    }

    #[test]
    fn critic_main_order() {
        let l = layout(false, true);
        let v = critic_main(&l, &state(), &obs(), 1, &[0.0, 1.0], 2);
        assert_eq!(v, vec![9.0, 3.0, 4.0, 7.0, 7.5, 8.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(v.len(), critic_main_len(&l));
    }

    #[test]
    fn aug_inputs() {
        let l = layout(true, false);
        let goals = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let g = global_aug(&l, &state(), 0, &[2, 1], &goals);
        assert_eq!(g, vec![3.0, 4.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.len(), global_aug_len(&l, 2));
        let c = credit_aug(&l, &state(), 0, 1, &goals);
        assert_eq!(c, vec![3.0, 4.0, 3.0, 4.0, 0.0, 1.0]);
        assert_eq!(c.len(), credit_aug_len(&l, 2));
    }

    #[test]
    fn coma_input_length() {
        let l = layout(false, false);
        let goals = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let v = coma_main(&l, &state(), &obs(), 1, &[0, 2], &goals);
        assert_eq!(v.len(), coma_main_len(&l, 2));
        assert_eq!(&v[5..8], &[1.0, 0.0, 0.0]);
    }
}
