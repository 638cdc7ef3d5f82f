//! Global action-value functions Q_n(s, a⃗), credit functions Q_n(s, aᵐ),
//! their target copies, and temporal-difference losses.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{self, RowBatch};
use crate::game::{DecomposedObservation, DecomposedState, InputLayout, Transition};
use crate::gradients::td_error;
use crate::nn::{AugmentableNet, Grads, Stage};

/// A network and its slowly trailing target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: AugmentableNet,
    pub target: AugmentableNet,
}

impl Critic {
    pub fn new(net: AugmentableNet) -> Self {
        Self {
            target: net.clone(),
            net,
        }
    }

    /// θ′ ← τθ + (1−τ)θ′.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidArgument(format!("soft-update rate {tau} outside (0, 1]")));
        }
        self.target.soft_update_from(&self.net, tau)
    }

    fn widened(&self) -> bool {
        self.net.stage() == Stage::Two
    }
}

/// Squared one-step TD error (r + γ·next − current)².
pub fn td_loss(reward: f64, discount: f64, target_next: f64, current: f64, terminal: bool) -> f64 {
    td_error(reward, discount, target_next, current, terminal).powi(2)
}

/// The global Q and credit function for every goal.
///
/// With a single agent the credit function coincides with the global Q, so
/// `credit_q` may be absent and credit queries fall back to `global_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub layout: InputLayout,
    pub num_agents: usize,
    pub discount: f64,
    pub tau: f64,
    pub global_q: Critic,
    pub credit_q: Option<Critic>,
}

fn mse_grad(pred: &Array2<f64>, targets: &[f64], scale: f64) -> (f64, Array2<f64>) {
    let mut loss = 0.0;
    let mut up = Array2::zeros(pred.raw_dim());
    for (i, &y) in targets.iter().enumerate() {
        let d = pred[[i, 0]] - y;
        loss += d * d * scale;
        up[[i, 0]] = 2.0 * d * scale;
    }
    (loss, up)
}

impl CriticPair {
    pub fn new(
        layout: InputLayout,
        num_agents: usize,
        discount: f64,
        tau: f64,
        global_q: AugmentableNet,
        credit_q: Option<AugmentableNet>,
    ) -> Result<Self> {
        if num_agents > 1 && credit_q.is_none() {
            return Err(Error::InvalidArgument("multi-agent critics need a credit function".into()));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidArgument(format!("soft-update rate {tau} outside (0, 1]")));
        }
        Ok(Self {
            layout,
            num_agents,
            discount,
            tau,
            global_q: Critic::new(global_q),
            credit_q: credit_q.map(Critic::new),
        })
    }

    fn credit(&self) -> &Critic {
        self.credit_q.as_ref().unwrap_or(&self.global_q)
    }

    fn check_indices(&self, n: usize, m: usize) -> Result<()> {
        if n >= self.num_agents || m >= self.num_agents {
            return Err(Error::IndexOutOfRange(format!(
                "goal {n}, agent {m} with {} agents",
                self.num_agents
            )));
        }
        Ok(())
    }

    fn push_global(
        &self,
        rows: &mut RowBatch,
        state: &DecomposedState,
        obs: &[DecomposedObservation],
        goals: &[Vec<f64>],
        actions: &[usize],
        n: usize,
    ) {
        let main = features::critic_main(&self.layout, state, &obs[n], n, &goals[n], actions[n]);
        let aug = self
            .global_q
            .widened()
            .then(|| features::global_aug(&self.layout, state, n, actions, goals));
        rows.push(main, aug);
    }

    #[allow(clippy::too_many_arguments)]
    fn push_credit(
        &self,
        rows: &mut RowBatch,
        state: &DecomposedState,
        obs: &[DecomposedObservation],
        goals: &[Vec<f64>],
        n: usize,
        m: usize,
        action: usize,
    ) {
        let main = features::critic_main(&self.layout, state, &obs[n], n, &goals[n], action);
        let aug = match &self.credit_q {
            Some(c) if c.widened() => Some(features::credit_aug(&self.layout, state, n, m, goals)),
            _ => None,
        };
        rows.push(main, aug);
    }

    /// Q_n(s, aᵐ) for a single query.
    #[allow(clippy::too_many_arguments)]
    pub fn credit_value(
        &self,
        state: &DecomposedState,
        obs: &[DecomposedObservation],
        goals: &[Vec<f64>],
        m: usize,
        action: usize,
        n: usize,
    ) -> Result<f64> {
        self.check_indices(n, m)?;
        if action >= self.layout.num_actions {
            return Err(Error::IndexOutOfRange(format!("action {action} for agent {m}")));
        }
        let mut rows = RowBatch::new();
        self.push_credit(&mut rows, state, obs, goals, n, m, action);
        Ok(rows.predict(&self.credit().net)?[[0, 0]])
    }

    /// Q_n(s, a⃗) for a single query.
    pub fn global_value(
        &self,
        state: &DecomposedState,
        obs: &[DecomposedObservation],
        goals: &[Vec<f64>],
        actions: &[usize],
        n: usize,
    ) -> Result<f64> {
        self.check_indices(n, 0)?;
        let mut rows = RowBatch::new();
        self.push_global(&mut rows, state, obs, goals, actions, n);
        Ok(rows.predict(&self.global_q.net)?[[0, 0]])
    }

    /// `[i][n]` = Q_n(sᵢ, a⃗ᵢ) on the main network.
    pub fn global_values(&self, batch: &[&Transition]) -> Result<Vec<Vec<f64>>> {
        let n_agents = self.num_agents;
        let mut rows = RowBatch::new();
        for t in batch {
            for n in 0..n_agents {
                self.push_global(&mut rows, &t.state, &t.observations, &t.goals, &t.actions, n);
            }
        }
        if rows.is_empty() {
            return Ok(vec![]);
        }
        let out = rows.predict(&self.global_q.net)?;
        Ok((0..batch.len())
            .map(|i| (0..n_agents).map(|n| out[[i * n_agents + n, 0]]).collect())
            .collect())
    }

    /// `[i][n][m][â]` = Q_n(sᵢ, âᵐ) on the main network, for every action â.
    pub fn credit_table(&self, batch: &[&Transition]) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
        let n_agents = self.num_agents;
        let a = self.layout.num_actions;
        let mut rows = RowBatch::new();
        for t in batch {
            for n in 0..n_agents {
                for m in 0..n_agents {
                    for b in 0..a {
                        self.push_credit(&mut rows, &t.state, &t.observations, &t.goals, n, m, b);
                    }
                }
            }
        }
        if rows.is_empty() {
            return Ok(vec![]);
        }
        let out = rows.predict(&self.credit().net)?;
        let mut k = 0;
        Ok(batch
            .iter()
            .map(|_| {
                (0..n_agents)
                    .map(|_| {
                        (0..n_agents)
                            .map(|_| {
                                (0..a)
                                    .map(|_| {
                                        k += 1;
                                        out[[k - 1, 0]]
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect())
    }

    /// Mean over the minibatch of (1/N)Σ_n (yⁿ − Q_n(s, a⃗))², with
    /// yⁿ = rⁿ + γQ′_n(s′, a⃗′) and `next_actions[i]` drawn from the target policy.
    pub fn global_q_loss(&self, batch: &[&Transition], next_actions: &[Vec<usize>]) -> Result<(f64, Grads)> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let n_agents = self.num_agents;
        let mut cur = RowBatch::new();
        let mut next = RowBatch::new();
        for (t, a2) in batch.iter().zip(next_actions) {
            for n in 0..n_agents {
                self.push_global(&mut cur, &t.state, &t.observations, &t.goals, &t.actions, n);
                self.push_global(&mut next, &t.next_state, &t.next_observations, &t.goals, a2, n);
            }
        }
        let tail = next.predict(&self.global_q.target)?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .flat_map(|(i, t)| {
                (0..n_agents).map(move |n| (i, n, t))
            })
            .map(|(i, n, t)| {
                let boot = if t.terminal { 0.0 } else { self.discount * tail[[i * n_agents + n, 0]] };
                t.rewards[n] + boot
            })
            .collect();
        let (pred, tape) = cur.forward(&self.global_q.net)?;
        let scale = 1.0 / (batch.len() * n_agents) as f64;
        let (loss, up) = mse_grad(&pred, &targets, scale);
        Ok((loss, self.global_q.net.backward(&tape, &up)))
    }

    /// Mean over the minibatch of (1/N²)Σ_{n,m} (yⁿ − Q_n(s, aᵐ))², with
    /// yⁿ = rⁿ + γQ′_n(s′, a′ᵐ).
    pub fn credit_loss(&self, batch: &[&Transition], next_actions: &[Vec<usize>]) -> Result<(f64, Grads)> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let critic = self.credit();
        let n_agents = self.num_agents;
        let mut cur = RowBatch::new();
        let mut next = RowBatch::new();
        let mut targets_meta = Vec::new();
        for (t, a2) in batch.iter().zip(next_actions) {
            for n in 0..n_agents {
                for m in 0..n_agents {
                    self.push_credit(&mut cur, &t.state, &t.observations, &t.goals, n, m, t.actions[m]);
                    self.push_credit(&mut next, &t.next_state, &t.next_observations, &t.goals, n, m, a2[m]);
                    targets_meta.push((t.rewards[n], t.terminal));
                }
            }
        }
        let tail = next.predict(&critic.target)?;
        let targets: Vec<f64> = targets_meta
            .iter()
            .enumerate()
            .map(|(k, &(r, terminal))| r + if terminal { 0.0 } else { self.discount * tail[[k, 0]] })
            .collect();
        let (pred, tape) = cur.forward(&critic.net)?;
        let scale = 1.0 / (batch.len() * n_agents * n_agents) as f64;
        let (loss, up) = mse_grad(&pred, &targets, scale);
        Ok((loss, critic.net.backward(&tape, &up)))
    }

    /// Soft update of every target network.
    pub fn soft_update(&mut self) -> Result<()> {
        self.global_q.soft_update(self.tau)?;
        if let Some(c) = &mut self.credit_q {
            c.soft_update(self.tau)?;
        }
        Ok(())
    }
}

/// COMA's centralized critic: one output per own action of agent n, trained
/// on the summed reward against all goals.
#[derive(Debug, Clone, PartialEq)]
pub struct ComaCritic {
    pub layout: InputLayout,
    pub num_agents: usize,
    pub discount: f64,
    pub tau: f64,
    pub critic: Critic,
}

impl ComaCritic {
    pub fn new(layout: InputLayout, num_agents: usize, discount: f64, tau: f64, net: AugmentableNet) -> Self {
        Self {
            layout,
            num_agents,
            discount,
            tau,
            critic: Critic::new(net),
        }
    }

    fn rows(&self, state: &DecomposedState, obs: &[DecomposedObservation], goals: &[Vec<f64>], actions: &[usize], rows: &mut RowBatch) {
        for n in 0..self.num_agents {
            rows.push(features::coma_main(&self.layout, state, &obs[n], n, actions, goals), None);
        }
    }

    /// `[i][n][â]` = Q(sᵢ, a⁻ⁿᵢ, aⁿ = â, g⃗ᵢ) on the main network.
    pub fn action_values(&self, batch: &[&Transition]) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut rows = RowBatch::new();
        for t in batch {
            self.rows(&t.state, &t.observations, &t.goals, &t.actions, &mut rows);
        }
        if rows.is_empty() {
            return Ok(vec![]);
        }
        let out = rows.predict(&self.critic.net)?;
        let n_agents = self.num_agents;
        Ok((0..batch.len())
            .map(|i| (0..n_agents).map(|n| out.row(i * n_agents + n).to_vec()).collect())
            .collect())
    }

    /// Mean over (i, n) of (Σ_k rᵏ + γQ′(s′, a⃗′)[a′ⁿ] − Q(s, a⃗)[aⁿ])².
    pub fn loss(&self, batch: &[&Transition], next_actions: &[Vec<usize>]) -> Result<(f64, Grads)> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let n_agents = self.num_agents;
        let mut cur = RowBatch::new();
        let mut next = RowBatch::new();
        for (t, a2) in batch.iter().zip(next_actions) {
            self.rows(&t.state, &t.observations, &t.goals, &t.actions, &mut cur);
            self.rows(&t.next_state, &t.next_observations, &t.goals, a2, &mut next);
        }
        let tail = next.predict(&self.critic.target)?;
        let (pred, tape) = cur.forward(&self.critic.net)?;
        let scale = 1.0 / (batch.len() * n_agents) as f64;
        let mut up = Array2::zeros(pred.raw_dim());
        let mut loss = 0.0;
        for (i, (t, a2)) in batch.iter().zip(next_actions).enumerate() {
            let total: f64 = t.rewards.iter().sum();
            for n in 0..n_agents {
                let k = i * n_agents + n;
                let boot = if t.terminal { 0.0 } else { self.discount * tail[[k, a2[n]]] };
                let d = pred[[k, t.actions[n]]] - (total + boot);
                loss += d * d * scale;
                up[[k, t.actions[n]]] = 2.0 * d * scale;
            }
        }
        Ok((loss, self.critic.net.backward(&tape, &up)))
    }

    pub fn soft_update(&mut self) -> Result<()> {
        self.critic.soft_update(self.tau)
    }
}

/// Independent value function V(oⁿ_self, gⁿ), widened with oⁿ_others.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCritic {
    pub discount: f64,
    pub tau: f64,
    pub critic: Critic,
}

impl ValueCritic {
    pub fn new(discount: f64, tau: f64, net: AugmentableNet) -> Self {
        Self {
            discount,
            tau,
            critic: Critic::new(net),
        }
    }

    fn rows<'a>(&self, inputs: impl IntoIterator<Item = (&'a DecomposedObservation, &'a [f64])>) -> RowBatch {
        let widened = self.critic.widened();
        let mut rows = RowBatch::new();
        for (obs, goal) in inputs {
            rows.push(features::policy_main(obs, goal), widened.then(|| features::policy_aug(obs)));
        }
        rows
    }

    fn values<'a>(
        &self,
        net: &AugmentableNet,
        inputs: impl IntoIterator<Item = (&'a DecomposedObservation, &'a [f64])>,
    ) -> Result<Vec<f64>> {
        let rows = self.rows(inputs);
        if rows.is_empty() {
            return Ok(vec![]);
        }
        Ok(rows.predict(net)?.column(0).to_vec())
    }

    /// `[i][n]` = rⁿ + γV(o′ⁿ, gⁿ) − V(oⁿ, gⁿ) on the main network.
    pub fn td_errors(&self, batch: &[&Transition]) -> Result<Vec<Vec<f64>>> {
        let n_agents = batch.first().map_or(0, |t| t.goals.len());
        let cur = self.values(&self.critic.net, batch_inputs(batch, false))?;
        let next = self.values(&self.critic.net, batch_inputs(batch, true))?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                (0..n_agents)
                    .map(|n| {
                        let k = i * n_agents + n;
                        td_error(t.rewards[n], self.discount, next[k], cur[k], t.terminal)
                    })
                    .collect()
            })
            .collect())
    }

    /// Mean over (i, n) of (rⁿ + γV′(o′ⁿ) − V(oⁿ))².
    pub fn loss(&self, batch: &[&Transition]) -> Result<(f64, Grads)> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let n_agents = batch[0].goals.len();
        let next = self.values(&self.critic.target, batch_inputs(batch, true))?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..n_agents).map(move |n| (i, n, t)))
            .map(|(i, n, t)| {
                t.rewards[n] + if t.terminal { 0.0 } else { self.discount * next[i * n_agents + n] }
            })
            .collect();
        let (pred, tape) = self.rows(batch_inputs(batch, false)).forward(&self.critic.net)?;
        let (loss, up) = mse_grad(&pred, &targets, 1.0 / targets.len() as f64);
        Ok((loss, self.critic.net.backward(&tape, &up)))
    }

    pub fn soft_update(&mut self) -> Result<()> {
        self.critic.soft_update(self.tau)
    }
}

/// (observation, goal) for every agent of every transition, agent-minor.
pub fn batch_inputs<'a>(
    batch: &'a [&'a Transition],
    next: bool,
) -> impl Iterator<Item = (&'a DecomposedObservation, &'a [f64])> + 'a {
    batch.iter().flat_map(move |t| {
        let obs = if next { &t.next_observations } else { &t.observations };
        obs.iter().zip(t.goals.iter().map(Vec::as_slice))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{NetSpec, SideSpec, BranchSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> InputLayout {
        InputLayout {
            env_state: 1,
            agent_state: 2,
            obs_self: 2,
            obs_others: 2,
            goal: 1,
            num_actions: 3,
            critic_uses_self_obs: false,
            critic_side_uses_goals: true,
        }
    }

    fn zero_net(input: usize, rng: &mut ChaCha8Rng) -> AugmentableNet {
        let mut net = AugmentableNet::new(&NetSpec::mlp(input, vec![6, 1]), rng).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_flat_params(&zeros).unwrap();
        net
    }

    fn pair(rng: &mut ChaCha8Rng) -> CriticPair {
        let l = layout();
        let main = features::critic_main_len(&l);
        let g = zero_net(main, rng)
            .augment(
                &SideSpec {
                    input_len: features::global_aug_len(&l, 2),
                    branch: BranchSpec::dense(vec![0..features::global_aug_len(&l, 2)], &[4]),
                },
                None,
                rng,
            )
            .unwrap();
        let c = zero_net(main, rng)
            .augment(
                &SideSpec {
                    input_len: features::credit_aug_len(&l, 2),
                    branch: BranchSpec::dense(vec![0..features::credit_aug_len(&l, 2)], &[4]),
                },
                None,
                rng,
            )
            .unwrap();
        CriticPair::new(l, 2, 0.9, 0.01, g, Some(c)).unwrap()
    }

    fn transition(rewards: Vec<f64>) -> Transition {
        let state = DecomposedState {
            env_part: vec![0.5],
            agent_parts: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
        };
        let obs = vec![
            DecomposedObservation {
                self_part: vec![0.1, 0.2],
                others_part: vec![0.2, 0.2],
            };
            2
        ];
        Transition {
            state: state.clone(),
            observations: obs.clone(),
            goals: vec![vec![1.0], vec![0.0]],
            actions: vec![0, 2],
            rewards,
            next_state: state,
            next_observations: obs,
            terminal: false,
        }
    }

    #[test]
    fn hand_set_td_loss() {
        assert_eq!(td_loss(1.0, 0.5, 2.0, 1.0, false), 1.0);
    }

    #[test]
    fn zero_rewards_and_zero_critic_give_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pair(&mut rng);
        let t = transition(vec![0.0, 0.0]);
        let (l1, _) = p.credit_loss(&[&t], &[vec![1, 1]]).unwrap();
        let (l2, _) = p.global_q_loss(&[&t], &[vec![1, 1]]).unwrap();
        assert_eq!(l1, 0.0);
        assert_eq!(l2, 0.0);
    }

    #[test]
    fn empty_minibatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = pair(&mut rng);
        assert!(matches!(p.credit_loss(&[], &[]), Err(Error::EmptyMinibatch)));
    }

    #[test]
    fn index_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = pair(&mut rng);
        let t = transition(vec![0.0, 0.0]);
        assert!(p.credit_value(&t.state, &t.observations, &t.goals, 2, 0, 0).is_err());
        assert!(p.credit_value(&t.state, &t.observations, &t.goals, 0, 3, 0).is_err());
    }

    #[test]
    fn soft_update_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = Critic::new(zero_net(3, &mut rng));
        let ones = vec![1.0; c.net.param_count()];
        c.net.set_flat_params(&ones).unwrap();
        c.soft_update(0.01).unwrap();
        assert!(c.target.flat_params().iter().all(|&v| (v - 0.01).abs() < 1e-15));
        for k in 2..50 {
            c.soft_update(0.01).unwrap();
            let expected = 1.0 - 0.99f64.powi(k);
            assert!(c.target.flat_params().iter().all(|&v| (v - expected).abs() < 1e-12));
        }
        c.soft_update(1.0).unwrap();
        assert_eq!(c.target.flat_params(), c.net.flat_params());
        assert!(c.soft_update(0.0).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = pair(&mut rng);
        let params: Vec<f64> = (0..p.credit_q.as_ref().unwrap().net.param_count())
            .map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.05)
            .collect();
        p.credit_q.as_mut().unwrap().net.set_flat_params(&params).unwrap();
        let t = transition(vec![1.0, -0.5]);
        let (_, g) = p.credit_loss(&[&t], &[vec![1, 0]]).unwrap();
        let g = g.flatten();
        let h = 1e-6;
        for i in (0..params.len()).step_by(7) {
            let mut q = p.clone();
            let mut up = params.clone();
            up[i] += h;
            q.credit_q.as_mut().unwrap().net.set_flat_params(&up).unwrap();
            let lu = q.credit_loss(&[&t], &[vec![1, 0]]).unwrap().0;
            up[i] -= 2.0 * h;
            q.credit_q.as_mut().unwrap().net.set_flat_params(&up).unwrap();
            let ld = q.credit_loss(&[&t], &[vec![1, 0]]).unwrap().0;
            assert!(((lu - ld) / (2.0 * h) - g[i]).abs() < 1e-6);
        }
    }
}
