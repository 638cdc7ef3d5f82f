//! C ABI over the cm3 environments, trained policies and verification suites.
//!
//! Every function returns a [`Cm3Status`]; on failure the message is kept per
//! thread and can be copied out with [`cm3_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cm3::env::{CheckersWorld, EnvConfig, LaneMergeWorld, NavigationWorld, Scenario};
use cm3::error::Error;
use cm3::game::MultiGoalGame;
use cm3::nn::{Checkpoint, PolicyNet};
use cm3::oracle::{cooperation_probability, run_suite, Suite};
use cm3::trainer::{evaluate_policy, policy_actions, Learner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cm3Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Mismatch = 5,
    /// A check ran and failed; not an API misuse.
    CheckFailed = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> Cm3Status {
    match err {
        Error::Io { .. } => Cm3Status::Io,
        Error::Json(_) | Error::Config(_) | Error::Unknown { .. } => Cm3Status::Parse,
        Error::CheckpointMismatch(_) | Error::StageMismatch(_) | Error::DimensionMismatch(_) => Cm3Status::Mismatch,
        _ => Cm3Status::InvalidArgument,
    }
}

fn fail(status: Cm3Status, msg: impl Into<String>) -> Cm3Status {
    set_error(msg.into());
    status
}

/// Run `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<Cm3Status, Error>) -> Cm3Status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(e)) => fail(status_of(&e), e.to_string()),
        Err(_) => fail(Cm3Status::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, Error> {
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| Error::InvalidArgument(format!("string is not UTF-8: {e}")))
}

#[derive(Clone)]
enum World {
    Navigation(NavigationWorld),
    LaneMerge(LaneMergeWorld),
    Checkers(CheckersWorld),
}

macro_rules! with_world {
    ($world:expr, $g:ident => $body:expr) => {
        match $world {
            World::Navigation($g) => $body,
            World::LaneMerge($g) => $body,
            World::Checkers($g) => $body,
        }
    };
}

/// An environment instance with its own random stream.
pub struct Cm3Env {
    world: World,
    rng: ChaCha8Rng,
}

/// A goal-conditioned policy restored from a checkpoint.
pub struct Cm3Policy {
    policy: PolicyNet,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cm3EvalSummary {
    pub episodes: usize,
    pub joint_return: f64,
    pub joint_return_std: f64,
    pub success_rate: f64,
}

/// Length in bytes of the last error message on this thread, excluding the terminator.
#[no_mangle]
pub extern "C" fn cm3_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to `len`).
/// Returns the number of bytes written excluding the terminator.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes or be NULL.
#[no_mangle]
pub unsafe extern "C" fn cm3_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len().min(len - 1);
        std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
        n
    })
}

/// Build an environment from scenario TOML text (an `[env]` table with a `kind`).
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_new(scenario_toml: *const c_char, seed: u64, out: *mut *mut Cm3Env) -> Cm3Status {
    if scenario_toml.is_null() || out.is_null() {
        return fail(Cm3Status::NullPointer, "null argument to cm3_env_new");
    }
    guard(|| {
        let scenario = Scenario::from_toml(str_arg(scenario_toml)?)?;
        let world = match scenario.env {
            EnvConfig::Navigation(c) => World::Navigation(NavigationWorld::new(c)?),
            EnvConfig::LaneMerge(c) => World::LaneMerge(LaneMergeWorld::new(c)?),
            EnvConfig::Checkers(c) => World::Checkers(CheckersWorld::new(c)?),
        };
        let mut env = Cm3Env {
            world,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        with_world!(&mut env.world, g => g.reset(&mut env.rng))?;
        *out = Box::into_raw(Box::new(env));
        Ok(Cm3Status::Ok)
    })
}

/// # Safety
/// `env` must come from [`cm3_env_new`] and not be used afterwards; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_free(env: *mut Cm3Env) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of agents, or 0 for NULL.
///
/// # Safety
/// `env` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_num_agents(env: *const Cm3Env) -> usize {
    env.as_ref().map_or(0, |e| with_world!(&e.world, g => g.spec().num_agents))
}

/// Number of actions of `agent`, or 0 when out of range.
///
/// # Safety
/// `env` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_num_actions(env: *const Cm3Env, agent: usize) -> usize {
    env.as_ref().map_or(0, |e| {
        with_world!(&e.world, g => g.spec().action_sizes.get(agent).copied().unwrap_or(0))
    })
}

/// Start a new episode with freshly sampled goals.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_reset(env: *mut Cm3Env) -> Cm3Status {
    let Some(env) = env.as_mut() else {
        return fail(Cm3Status::NullPointer, "null environment");
    };
    guard(|| {
        with_world!(&mut env.world, g => g.reset(&mut env.rng))?;
        Ok(Cm3Status::Ok)
    })
}

/// Lengths of agent `agent`'s own and others' observation parts.
///
/// # Safety
/// `env` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_observation_len(
    env: *const Cm3Env,
    agent: usize,
    self_len: *mut usize,
    others_len: *mut usize,
) -> Cm3Status {
    let (Some(env), false, false) = (env.as_ref(), self_len.is_null(), others_len.is_null()) else {
        return fail(Cm3Status::NullPointer, "null argument to cm3_env_observation_len");
    };
    guard(|| {
        let n = with_world!(&env.world, g => g.spec().num_agents);
        if agent >= n {
            return Err(Error::IndexOutOfRange(format!("agent {agent} of {n}")));
        }
        let obs = with_world!(&env.world, g => g.observe(agent));
        *self_len = obs.self_part.len();
        *others_len = obs.others_part.len();
        Ok(Cm3Status::Ok)
    })
}

/// Copy agent `agent`'s observation into the two buffers.
///
/// # Safety
/// Buffers must hold at least the capacities given.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_observe(
    env: *const Cm3Env,
    agent: usize,
    self_out: *mut f64,
    self_cap: usize,
    others_out: *mut f64,
    others_cap: usize,
) -> Cm3Status {
    let Some(env) = env.as_ref() else {
        return fail(Cm3Status::NullPointer, "null environment");
    };
    guard(|| {
        let n = with_world!(&env.world, g => g.spec().num_agents);
        if agent >= n {
            return Err(Error::IndexOutOfRange(format!("agent {agent} of {n}")));
        }
        let obs = with_world!(&env.world, g => g.observe(agent));
        for (part, out, cap) in [(&obs.self_part, self_out, self_cap), (&obs.others_part, others_out, others_cap)] {
            if part.is_empty() {
                continue;
            }
            if out.is_null() || cap < part.len() {
                return Err(Error::DimensionMismatch(format!("buffer holds {cap}, need {}", part.len())));
            }
            std::ptr::copy_nonoverlapping(part.as_ptr(), out, part.len());
        }
        Ok(Cm3Status::Ok)
    })
}

/// Apply one action per agent, writing per-agent rewards and whether the episode ended.
///
/// # Safety
/// `actions` must hold `count` entries and `rewards_out` at least `rewards_cap`.
#[no_mangle]
pub unsafe extern "C" fn cm3_env_step(
    env: *mut Cm3Env,
    actions: *const usize,
    count: usize,
    rewards_out: *mut f64,
    rewards_cap: usize,
    done_out: *mut bool,
) -> Cm3Status {
    let Some(env) = env.as_mut() else {
        return fail(Cm3Status::NullPointer, "null environment");
    };
    if actions.is_null() || rewards_out.is_null() || done_out.is_null() {
        return fail(Cm3Status::NullPointer, "null argument to cm3_env_step");
    }
    guard(|| {
        let acts = std::slice::from_raw_parts(actions, count);
        let n = with_world!(&env.world, g => g.spec().num_agents);
        if rewards_cap < n {
            return Err(Error::DimensionMismatch(format!("reward buffer holds {rewards_cap}, need {n}")));
        }
        let step = with_world!(&mut env.world, g => g.step(acts, &mut env.rng))?;
        std::ptr::copy_nonoverlapping(step.rewards.as_ptr(), rewards_out, n);
        *done_out = step.done();
        Ok(Cm3Status::Ok)
    })
}

/// Restore the policy stored in a checkpoint file, acting at its final exploration rate.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm3_policy_load(path: *const c_char, out: *mut *mut Cm3Policy) -> Cm3Status {
    if path.is_null() || out.is_null() {
        return fail(Cm3Status::NullPointer, "null argument to cm3_policy_load");
    }
    guard(|| {
        let ckpt = Checkpoint::load(Path::new(str_arg(path)?))?;
        let kind = ckpt.env.parse().ok();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let learner = Learner::from_checkpoint(&ckpt, kind, 0.99, &mut rng)?;
        let mut policy = learner.policy;
        policy.epsilon = learner.meta.epsilon_end;
        *out = Box::into_raw(Box::new(Cm3Policy { policy }));
        Ok(Cm3Status::Ok)
    })
}

/// # Safety
/// `policy` must come from [`cm3_policy_load`] and not be used afterwards; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn cm3_policy_free(policy: *mut Cm3Policy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Sample one action per agent for the environment's current state.
///
/// # Safety
/// Handles must be live; `actions_out` must hold `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn cm3_policy_act(
    policy: *const Cm3Policy,
    env: *mut Cm3Env,
    actions_out: *mut usize,
    cap: usize,
) -> Cm3Status {
    let (Some(policy), Some(env)) = (policy.as_ref(), env.as_mut()) else {
        return fail(Cm3Status::NullPointer, "null handle");
    };
    if actions_out.is_null() {
        return fail(Cm3Status::NullPointer, "null action buffer");
    }
    guard(|| {
        let actions = with_world!(&env.world, g => policy_actions(&policy.policy, g, &mut env.rng))?;
        if cap < actions.len() {
            return Err(Error::DimensionMismatch(format!("action buffer holds {cap}, need {}", actions.len())));
        }
        std::ptr::copy_nonoverlapping(actions.as_ptr(), actions_out, actions.len());
        Ok(Cm3Status::Ok)
    })
}

/// Evaluate the policy for `episodes` episodes on a copy of the environment.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cm3_policy_evaluate(
    policy: *const Cm3Policy,
    env: *const Cm3Env,
    episodes: usize,
    seed: u64,
    out: *mut Cm3EvalSummary,
) -> Cm3Status {
    let (Some(policy), Some(env)) = (policy.as_ref(), env.as_ref()) else {
        return fail(Cm3Status::NullPointer, "null handle");
    };
    if out.is_null() {
        return fail(Cm3Status::NullPointer, "null summary");
    }
    guard(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut world = env.world.clone();
        let report = with_world!(&mut world, g => {
            let horizon = g.spec().horizon;
            evaluate_policy(&policy.policy, g, episodes, horizon, &mut rng)
        })?;
        *out = Cm3EvalSummary {
            episodes: report.episodes,
            joint_return: report.joint_return,
            joint_return_std: report.joint_return_std,
            success_rate: report.success_rate,
        };
        Ok(Cm3Status::Ok)
    })
}

/// Probability that two exploring agents stumble onto the cooperative path in
/// the 4×3 gridworld, at `epsilon` and with uniformly random actions.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm3_cooperation_probability(epsilon: f64, greedy_mix: *mut f64, uniform: *mut f64) -> Cm3Status {
    if greedy_mix.is_null() || uniform.is_null() {
        return fail(Cm3Status::NullPointer, "null output");
    }
    guard(|| {
        let p = cooperation_probability(epsilon)?;
        *greedy_mix = p.greedy_mix;
        *uniform = p.uniform;
        Ok(Cm3Status::Ok)
    })
}

/// Run a verification suite: "identities", "gradients", "variance" or "coop-prob".
/// Returns `CM3_STATUS_CHECK_FAILED` when any check fails.
///
/// # Safety
/// `suite` must be a NUL-terminated string; `passed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cm3_verify(suite: *const c_char, seed: u64, trials: usize, passed: *mut bool) -> Cm3Status {
    if suite.is_null() {
        return fail(Cm3Status::NullPointer, "null suite name");
    }
    guard(|| {
        let suite: Suite = str_arg(suite)?.parse()?;
        let report = run_suite(suite, seed, trials)?;
        if !passed.is_null() {
            *passed = report.passed;
        }
        if report.passed {
            Ok(Cm3Status::Ok)
        } else {
            set_error(format!("{} suite failed", suite.name()));
            Ok(Cm3Status::CheckFailed)
        }
    })
}
