//! The two-stage training loop.

use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{MultiGoalGame, Transition};
use crate::nn::{Checkpoint, Stage};

use super::buffer::{BufferMode, EpsilonSchedule, ReplayBuffer};
use super::config::{Method, TrainEvery, TrainerConfig};
use super::evaluate::{evaluate_policy, policy_actions, EvalReport};
use super::metrics::{MetricRecord, MetricsWriter};
use super::models::Learner;

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone)]
pub struct SeedStreams {
    pub init: ChaCha8Rng,
    pub env: ChaCha8Rng,
    pub goals: ChaCha8Rng,
    pub explore: ChaCha8Rng,
    pub minibatch: ChaCha8Rng,
    pub eval: ChaCha8Rng,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Self {
            init: stream(1),
            env: stream(2),
            goals: stream(3),
            explore: stream(4),
            minibatch: stream(5),
            eval: stream(6),
        }
    }
}

/// Per-agent goals drawn from the game's episode distribution.
pub fn sample_goals<G: MultiGoalGame>(game: &G, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    game.assignment_goals(&game.sample_assignment(rng))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Metrics are also written here as JSON lines.
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricRecord>,
    /// Evaluation of the final policy, absent when `final_eval_episodes` is zero.
    pub final_eval: Option<EvalReport>,
}

/// Train π¹ and Q¹ on a single-agent game.
pub fn run_stage1<G: MultiGoalGame>(config: &TrainerConfig, game: &G, options: &RunOptions) -> Result<StageOutcome> {
    config.validate()?;
    if config.stage != Stage::One {
        return Err(Error::Config("run_stage1 needs stage = one".into()));
    }
    if game.spec().num_agents != 1 {
        return Err(Error::UnsupportedReduction(format!(
            "Stage One runs on the induced single-agent game, got {} agents",
            game.spec().num_agents
        )));
    }
    let mut streams = SeedStreams::new(options.seed);
    let learner = Learner::stage_one(game.kind(), &game.layout(), game.spec().discount, config, &mut streams.init)?;
    train(learner, config, game.clone(), streams, options)
}

/// Train the multi-agent networks with `method`, restoring `stage_one` when the method needs it.
pub fn run_stage2<G: MultiGoalGame>(
    config: &TrainerConfig,
    game: &G,
    stage_one: Option<&Checkpoint>,
    method: Method,
    options: &RunOptions,
) -> Result<StageOutcome> {
    let config = TrainerConfig {
        method,
        ..config.clone()
    };
    config.validate()?;
    if config.stage != Stage::Two {
        return Err(Error::Config("run_stage2 needs stage = two".into()));
    }
    if let (Some(ckpt), Some(kind)) = (stage_one, game.kind()) {
        if method.uses_stage_one() && ckpt.env != kind.name() {
            return Err(Error::CheckpointMismatch(format!(
                "Stage-One checkpoint is for {}, environment is {}",
                ckpt.env, kind
            )));
        }
    }
    let mut streams = SeedStreams::new(options.seed);
    let learner = Learner::stage_two(
        game.kind(),
        &game.layout(),
        game.spec().num_agents,
        game.spec().discount,
        &config,
        stage_one,
        &mut streams.init,
    )?;
    train(learner, &config, game.clone(), streams, options)
}

fn train_round(
    learner: &mut Learner,
    buffer: &mut ReplayBuffer,
    config: &TrainerConfig,
    rng: &mut ChaCha8Rng,
    losses: &mut Vec<f64>,
) -> Result<()> {
    if buffer.is_empty() {
        return Ok(());
    }
    for _ in 0..config.epochs {
        let batch = buffer.sample(config.minibatch, rng);
        losses.push(learner.train_epoch(&batch, rng)?.critic_loss);
    }
    buffer.after_training();
    Ok(())
}

fn train<G: MultiGoalGame>(
    mut learner: Learner,
    config: &TrainerConfig,
    mut game: G,
    mut streams: SeedStreams,
    options: &RunOptions,
) -> Result<StageOutcome> {
    let mode = if config.off_policy {
        BufferMode::Circular
    } else {
        BufferMode::ResetAfterTraining
    };
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, mode);
    let mut schedule = EpsilonSchedule::new(config.epsilon_start, config.epsilon_end, config.epsilon_div);
    let mut writer = options.metrics_path.as_deref().map(MetricsWriter::create).transpose()?;
    let mut metrics = Vec::new();
    let mut losses = Vec::new();
    let mut eval_game = game.clone();
    let mut steps = 0usize;

    let evaluate_now = |learner: &Learner, eval_game: &mut G, episodes: usize, rng: &mut ChaCha8Rng| {
        let mut policy = learner.policy.clone();
        policy.epsilon = config.epsilon_end;
        evaluate_policy(&policy, eval_game, episodes, config.max_steps, rng)
    };

    for episode in 0..config.episodes {
        learner.set_epsilon(schedule.value());
        let assignment = game.sample_assignment(&mut streams.goals);
        game.reset_with(assignment, &mut streams.env)?;
        let goals = game.goals().to_vec();
        for _ in 0..config.max_steps {
            let state = game.state();
            let observations = game.observations();
            let actions = policy_actions(&learner.policy, &game, &mut streams.explore)?;
            let result = game.step(&actions, &mut streams.env)?;
            buffer.push(Transition {
                state,
                observations,
                goals: goals.clone(),
                actions,
                rewards: result.rewards,
                next_state: game.state(),
                next_observations: game.observations(),
                terminal: result.terminal,
            });
            steps += 1;
            if let TrainEvery::Steps(k) = config.train_every {
                if steps % k == 0 {
                    train_round(&mut learner, &mut buffer, config, &mut streams.minibatch, &mut losses)?;
                }
            }
            if result.terminal || result.timeout {
                break;
            }
        }
        schedule.advance();
        if let TrainEvery::Episodes(k) = config.train_every {
            if (episode + 1) % k == 0 {
                train_round(&mut learner, &mut buffer, config, &mut streams.minibatch, &mut losses)?;
            }
        }
        if config.eval_every > 0 && (episode + 1) % config.eval_every == 0 && config.eval_episodes > 0 {
            let report = evaluate_now(&learner, &mut eval_game, config.eval_episodes, &mut streams.eval)?;
            let loss = (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
            losses.clear();
            let record = MetricRecord::from_eval(episode + 1, schedule.value(), &report, loss);
            if let Some(w) = writer.as_mut() {
                w.write(&record)?;
            }
            metrics.push(record);
        }
    }

    let final_eval = if config.final_eval_episodes > 0 {
        Some(evaluate_now(&learner, &mut eval_game, config.final_eval_episodes, &mut streams.eval)?)
    } else {
        None
    };
    let checkpoint = learner.to_checkpoint()?;
    if let Some(path) = &options.checkpoint_path {
        checkpoint.save(path)?;
    }
    Ok(StageOutcome {
        checkpoint,
        metrics,
        final_eval,
    })
}
