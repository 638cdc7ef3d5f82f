//! Network construction, checkpoint round trips and one training epoch.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::critics::{batch_inputs, ComaCritic, CriticPair, ValueCritic};
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::game::{InputLayout, Transition};
use crate::gradients;
use crate::nn::{presets, sample_action, Adam, AugmentableNet, Checkpoint, Grads, PolicyNet, Stage};

use super::config::{Method, TrainerConfig};

/// Critic side of a learner.
#[derive(Debug, Clone)]
pub enum Critics {
    /// Global Q and credit function (Stage One uses the global Q alone).
    Pair(CriticPair),
    Coma(ComaCritic),
    Value(ValueCritic),
}

/// Architecture facts stored with every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub num_agents: usize,
    pub width_scale: f64,
    pub epsilon_end: f64,
    pub layout: InputLayout,
}

/// Policy, target policy, critics and their optimizers.
#[derive(Debug, Clone)]
pub struct Learner {
    pub kind: Option<EnvKind>,
    pub stage: Stage,
    pub method: Method,
    pub meta: ModelMeta,
    pub policy: PolicyNet,
    pub target_policy: AugmentableNet,
    pub critics: Critics,
    policy_opt: Adam,
    critic_opts: Vec<Adam>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub critic_loss: f64,
    pub credit_loss: f64,
    pub policy_grad_norm: f64,
}

fn critic_nets(c: &Critics) -> Vec<&AugmentableNet> {
    match c {
        Critics::Pair(p) => std::iter::once(&p.global_q.net)
            .chain(p.credit_q.as_ref().map(|c| &c.net))
            .collect(),
        Critics::Coma(c) => vec![&c.critic.net],
        Critics::Value(v) => vec![&v.critic.net],
    }
}

impl Learner {
    fn assemble(
        kind: Option<EnvKind>,
        stage: Stage,
        method: Method,
        meta: ModelMeta,
        policy: AugmentableNet,
        critics: Critics,
        cfg: &TrainerConfig,
    ) -> Result<Self> {
        let policy_opt = Adam::new(&policy, cfg.lr_policy);
        let critic_opts = critic_nets(&critics).into_iter().map(|n| Adam::new(n, cfg.lr_critic)).collect();
        Ok(Self {
            kind,
            stage,
            method,
            meta,
            target_policy: policy.clone(),
            policy: PolicyNet::new(policy, cfg.epsilon_start)?,
            critics,
            policy_opt,
            critic_opts,
        })
    }

    /// Fresh Stage-One networks π¹ and Q¹ for the single-agent game.
    pub fn stage_one(
        kind: Option<EnvKind>,
        layout: &InputLayout,
        discount: f64,
        cfg: &TrainerConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let s = cfg.width_scale;
        let policy = AugmentableNet::new(&presets::policy(kind, layout, s), rng)?;
        let q = AugmentableNet::new(&presets::critic(kind, layout, s), rng)?;
        let critics = Critics::Pair(CriticPair::new(layout.clone(), 1, discount, cfg.tau, q, None)?);
        let meta = ModelMeta {
            num_agents: 1,
            width_scale: s,
            epsilon_end: cfg.epsilon_end,
            layout: layout.clone(),
        };
        Self::assemble(kind, Stage::One, Method::Cm3, meta, policy, critics, cfg)
    }

    /// Stage-Two networks for `method`. CM3 and QV restore `stage_one`
    /// into the Stage-One parts before augmenting; the rest start fresh.
    pub fn stage_two(
        kind: Option<EnvKind>,
        layout: &InputLayout,
        num_agents: usize,
        discount: f64,
        cfg: &TrainerConfig,
        stage_one: Option<&Checkpoint>,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let s = cfg.width_scale;
        let method = cfg.method;
        let restore = match (method.uses_stage_one(), stage_one) {
            (true, Some(c)) => {
                if c.stage != Stage::One {
                    return Err(Error::StageMismatch("warm start needs a Stage-One checkpoint".into()));
                }
                Some(c)
            }
            (true, None) => {
                return Err(Error::StageMismatch(format!("{method} needs a Stage-One checkpoint")));
            }
            (false, _) => None,
        };
        let mut policy1 = AugmentableNet::new(&presets::policy(kind, layout, s), rng)?;
        if let Some(c) = restore {
            policy1.load_state(c.net("policy")?)?;
        }
        let policy = policy1.augment(&presets::policy_side(kind, layout, s), None, rng)?;
        let critics = match method {
            Method::Cm3 | Method::Qv | Method::Direct => {
                let mut q1 = AugmentableNet::new(&presets::critic(kind, layout, s), rng)?;
                if let Some(c) = restore {
                    q1.load_state(c.net("critic")?)?;
                }
                let credit_base = if restore.is_some() {
                    q1.clone()
                } else {
                    AugmentableNet::new(&presets::critic(kind, layout, s), rng)?
                };
                let global = q1.augment(&presets::global_side(kind, layout, num_agents, s), None, rng)?;
                let credit = credit_base.augment(&presets::credit_side(kind, layout, num_agents, s), None, rng)?;
                Critics::Pair(CriticPair::new(
                    layout.clone(),
                    num_agents,
                    discount,
                    cfg.tau,
                    global,
                    Some(credit),
                )?)
            }
            Method::Iac => {
                let v = AugmentableNet::new(&presets::value(kind, layout, s), rng)?
                    .augment(&presets::value_side(kind, layout, s), None, rng)?;
                Critics::Value(ValueCritic::new(discount, cfg.tau, v))
            }
            Method::Coma => {
                let net = AugmentableNet::new(&presets::coma(kind, layout, num_agents, s), rng)?;
                Critics::Coma(ComaCritic::new(layout.clone(), num_agents, discount, cfg.tau, net))
            }
        };
        let meta = ModelMeta {
            num_agents,
            width_scale: s,
            epsilon_end: cfg.epsilon_end,
            layout: layout.clone(),
        };
        Self::assemble(kind, Stage::Two, method, meta, policy, critics, cfg)
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.policy.epsilon = epsilon;
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let env = self.kind.map_or("custom", EnvKind::name);
        let mut c = Checkpoint::new(self.stage, env, self.method.name());
        c.insert("policy", &self.policy.net);
        match &self.critics {
            Critics::Pair(p) if self.stage == Stage::One => c.insert("critic", &p.global_q.net),
            Critics::Pair(p) => {
                c.insert("global_q", &p.global_q.net);
                if let Some(cr) = &p.credit_q {
                    c.insert("credit_q", &cr.net);
                }
            }
            Critics::Coma(k) => c.insert("coma", &k.critic.net),
            Critics::Value(v) => c.insert("value", &v.critic.net),
        }
        c.meta = serde_json::to_value(&self.meta)?;
        Ok(c)
    }

    /// Rebuild the architecture a checkpoint was saved from and load it.
    pub fn from_checkpoint(ckpt: &Checkpoint, kind: Option<EnvKind>, discount: f64, rng: &mut dyn RngCore) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| Error::CheckpointMismatch(format!("checkpoint metadata: {e}")))?;
        let method: Method = ckpt.method.parse()?;
        let cfg = TrainerConfig {
            stage: ckpt.stage,
            method,
            width_scale: meta.width_scale,
            epsilon_start: meta.epsilon_end,
            epsilon_end: meta.epsilon_end,
            ..TrainerConfig::default()
        };
        let mut learner = match ckpt.stage {
            Stage::One => Self::stage_one(kind, &meta.layout, discount, &cfg, rng)?,
            Stage::Two => {
                let mut c = cfg.clone();
                if method.uses_stage_one() {
                    c.method = Method::Direct;
                }
                let mut l = Self::stage_two(kind, &meta.layout, meta.num_agents, discount, &c, None, rng)?;
                l.method = method;
                l
            }
        };
        learner.policy.net.load_state(ckpt.net("policy")?)?;
        learner.target_policy = learner.policy.net.clone();
        match &mut learner.critics {
            Critics::Pair(p) if ckpt.stage == Stage::One => p.global_q.net.load_state(ckpt.net("critic")?)?,
            Critics::Pair(p) => {
                p.global_q.net.load_state(ckpt.net("global_q")?)?;
                if let Some(cr) = &mut p.credit_q {
                    cr.net.load_state(ckpt.net("credit_q")?)?;
                }
            }
            Critics::Coma(k) => k.critic.net.load_state(ckpt.net("coma")?)?,
            Critics::Value(v) => v.critic.net.load_state(ckpt.net("value")?)?,
        }
        match &mut learner.critics {
            Critics::Pair(p) => {
                p.global_q.target = p.global_q.net.clone();
                if let Some(cr) = &mut p.credit_q {
                    cr.target = cr.net.clone();
                }
            }
            Critics::Coma(k) => k.critic.target = k.critic.net.clone(),
            Critics::Value(v) => v.critic.target = v.critic.net.clone(),
        }
        learner.meta = meta;
        Ok(learner)
    }

    /// Next-step actions drawn from the target policy for every transition.
    fn target_actions(&self, batch: &[&Transition], rng: &mut dyn RngCore) -> Result<Vec<Vec<usize>>> {
        let target = PolicyNet {
            net: self.target_policy.clone(),
            epsilon: self.policy.epsilon,
        };
        let probs = target.distributions(batch_inputs(batch, true))?;
        let n = batch.first().map_or(0, |t| t.actions.len());
        Ok((0..batch.len())
            .map(|i| {
                (0..n)
                    .map(|m| sample_action(probs.row(i * n + m).as_slice().expect("standard layout"), rng))
                    .collect()
            })
            .collect())
    }

    /// Critic updates, one policy ascent step, then soft target updates.
    pub fn train_epoch(&mut self, batch: &[&Transition], rng: &mut dyn RngCore) -> Result<EpochStats> {
        if batch.is_empty() {
            return Err(Error::EmptyMinibatch);
        }
        let next = self.target_actions(batch, rng)?;
        let mut stats = EpochStats::default();
        let grads: Grads = match &mut self.critics {
            Critics::Pair(p) => {
                let (loss, g) = p.global_q_loss(batch, &next)?;
                self.critic_opts[0].step(&mut p.global_q.net, &g);
                stats.critic_loss = loss;
                if p.credit_q.is_some() {
                    let (loss, g) = p.credit_loss(batch, &next)?;
                    let net = &mut p.credit_q.as_mut().expect("checked above").net;
                    self.critic_opts[1].step(net, &g);
                    stats.credit_loss = loss;
                }
                match (self.stage, self.method) {
                    (Stage::One, _) => gradients::stage1_policy_gradient(&self.policy, p, batch)?,
                    (_, Method::Qv) => gradients::qv_policy_gradient(&self.policy, p, batch, None)?,
                    _ => gradients::cm3_policy_gradient(&self.policy, p, batch, None)?,
                }
            }
            Critics::Coma(k) => {
                let (loss, g) = k.loss(batch, &next)?;
                self.critic_opts[0].step(&mut k.critic.net, &g);
                stats.critic_loss = loss;
                gradients::coma_policy_gradient(&self.policy, k, batch)?
            }
            Critics::Value(v) => {
                let (loss, g) = v.loss(batch)?;
                self.critic_opts[0].step(&mut v.critic.net, &g);
                stats.critic_loss = loss;
                gradients::iac_policy_gradient(&self.policy, v, batch)?
            }
        };
        stats.policy_grad_norm = grads.norm_sq().sqrt();
        let mut descent = grads;
        descent.scale(-1.0);
        self.policy_opt.step(&mut self.policy.net, &descent);
        match &mut self.critics {
            Critics::Pair(p) => p.soft_update()?,
            Critics::Coma(k) => k.soft_update()?,
            Critics::Value(v) => v.soft_update()?,
        }
        let tau = match &self.critics {
            Critics::Pair(p) => p.tau,
            Critics::Coma(k) => k.tau,
            Critics::Value(v) => v.tau,
        };
        self.target_policy.soft_update_from(&self.policy.net, tau)?;
        Ok(stats)
    }
}
