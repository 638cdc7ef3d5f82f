//! Policy evaluation at the execution exploration rate.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MultiGoalGame;
use crate::nn::{sample_action, Checkpoint, PolicyNet};

use super::models::Learner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    /// Undiscounted episode return per agent, averaged over episodes.
    pub mean_returns: Vec<f64>,
    /// Mean over episodes of the summed agent returns.
    pub joint_return: f64,
    pub joint_return_std: f64,
    /// Fraction of episodes the environment reported as successful.
    pub success_rate: f64,
}

/// Sample one action per agent from a shared goal-conditioned policy.
pub fn policy_actions<G: MultiGoalGame>(policy: &PolicyNet, game: &G, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
    let obs = game.observations();
    let goals = game.goals();
    let probs = policy.distributions(obs.iter().zip(goals).map(|(o, g)| (o, g.as_slice())))?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|row| sample_action(row.as_slice().expect("standard layout"), rng))
        .collect())
}

/// Run `episodes` episodes of at most `max_steps` steps with `actor` choosing joint actions.
pub fn evaluate_with<G, F>(
    game: &mut G,
    episodes: usize,
    max_steps: usize,
    rng: &mut dyn RngCore,
    mut actor: F,
) -> Result<EvalReport>
where
    G: MultiGoalGame,
    F: FnMut(&G, &mut dyn RngCore) -> Result<Vec<usize>>,
{
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let n = game.spec().num_agents;
    let mut totals = vec![0.0; n];
    let mut joints = Vec::with_capacity(episodes);
    let mut successes = 0usize;
    for _ in 0..episodes {
        game.reset(rng)?;
        let mut returns = vec![0.0; n];
        let mut succeeded = false;
        for _ in 0..max_steps {
            let actions = actor(game, rng)?;
            let step = game.step(&actions, rng)?;
            for (acc, r) in returns.iter_mut().zip(&step.rewards) {
                *acc += r;
            }
            succeeded |= step.success;
            if step.done() {
                break;
            }
        }
        successes += usize::from(succeeded);
        for (t, r) in totals.iter_mut().zip(&returns) {
            *t += r;
        }
        joints.push(returns.iter().sum::<f64>());
    }
    let count = episodes as f64;
    let joint_return = joints.iter().sum::<f64>() / count;
    let var = joints.iter().map(|j| (j - joint_return).powi(2)).sum::<f64>() / count;
    Ok(EvalReport {
        episodes,
        mean_returns: totals.into_iter().map(|t| t / count).collect(),
        joint_return,
        joint_return_std: var.sqrt(),
        success_rate: successes as f64 / count,
    })
}

/// Evaluate a shared policy with ε set to `epsilon`.
pub fn evaluate_policy<G: MultiGoalGame>(
    policy: &PolicyNet,
    game: &mut G,
    episodes: usize,
    max_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<EvalReport> {
    evaluate_with(game, episodes, max_steps, rng, |g, r| policy_actions(policy, g, r))
}

/// Load a checkpoint and evaluate its policy at the checkpoint's ε_end; deterministic in `seed`.
pub fn evaluate<G: MultiGoalGame>(checkpoint: &Checkpoint, game: &mut G, episodes: usize, seed: u64) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let learner = Learner::from_checkpoint(checkpoint, game.kind(), game.spec().discount, &mut rng)?;
    if learner.meta.num_agents != game.spec().num_agents {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint trained for {} agents, environment has {}",
            learner.meta.num_agents,
            game.spec().num_agents
        )));
    }
    let mut policy = learner.policy;
    policy.epsilon = learner.meta.epsilon_end;
    let horizon = game.spec().horizon;
    evaluate_policy(&policy, game, episodes, horizon, &mut rng)
}
