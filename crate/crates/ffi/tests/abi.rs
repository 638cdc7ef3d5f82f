use std::ffi::{c_char, CString};
use std::ptr;

use cm3::env::EnvKind;
use cm3::nn::Stage;
use cm3::trainer::{run_stage2, Method, RunOptions, TrainerConfig};
use cm3::env::NavigationWorld;
use cm3_ffi::*;

const NAV: &str = "[env]\nkind = \"navigation\"\n";
const CHECKERS: &str = "[env]\nkind = \"checkers\"\n";

fn new_env(text: &str, seed: u64) -> *mut Cm3Env {
    let text = CString::new(text).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { cm3_env_new(text.as_ptr(), seed, &mut env) }, Cm3Status::Ok);
    assert!(!env.is_null());
    env
}

fn last_error() -> String {
    let mut buf = vec![0u8; cm3_last_error_length() + 1];
    let n = unsafe { cm3_last_error_message(buf.as_mut_ptr().cast::<c_char>(), buf.len()) };
    String::from_utf8(buf[..n].to_vec()).unwrap()
}

fn rollout(env: *mut Cm3Env, steps: usize) -> Vec<f64> {
    let agents = unsafe { cm3_env_num_agents(env) };
    let mut rewards = vec![0.0; agents];
    let mut trace = Vec::new();
    let mut done = false;
    for t in 0..steps {
        let actions: Vec<usize> = (0..agents).map(|i| (t + i) % unsafe { cm3_env_num_actions(env, i) }).collect();
        let status = unsafe { cm3_env_step(env, actions.as_ptr(), agents, rewards.as_mut_ptr(), agents, &mut done) };
        assert_eq!(status, Cm3Status::Ok, "{}", last_error());
        trace.extend_from_slice(&rewards);
        if done {
            break;
        }
    }
    trace
}

#[test]
fn environment_roundtrip() {
    let env = new_env(NAV, 3);
    let agents = unsafe { cm3_env_num_agents(env) };
    assert!(agents >= 2);
    assert!(unsafe { cm3_env_num_actions(env, 0) } > 1);
    assert_eq!(unsafe { cm3_env_num_actions(env, agents) }, 0);

    let (mut own, mut others) = (0, 0);
    assert_eq!(unsafe { cm3_env_observation_len(env, 0, &mut own, &mut others) }, Cm3Status::Ok);
    let mut a = vec![0.0; own];
    let mut b = vec![0.0; others];
    let status = unsafe { cm3_env_observe(env, 0, a.as_mut_ptr(), own, b.as_mut_ptr(), others) };
    assert_eq!(status, Cm3Status::Ok);
    assert!(a.iter().chain(&b).all(|x| x.is_finite()));

    let first = rollout(env, 10);
    unsafe { cm3_env_free(env) };
    let env = new_env(NAV, 3);
    assert_eq!(rollout(env, 10), first);
    assert_eq!(unsafe { cm3_env_reset(env) }, Cm3Status::Ok);
    unsafe { cm3_env_free(env) };
}

#[test]
fn errors_are_reported() {
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { cm3_env_new(ptr::null(), 0, &mut env) }, Cm3Status::NullPointer);
    let bad = CString::new("[env]\nkind = \"pong\"\n").unwrap();
    assert_eq!(unsafe { cm3_env_new(bad.as_ptr(), 0, &mut env) }, Cm3Status::Parse);
    assert!(env.is_null());
    assert!(!last_error().is_empty());

    let env = new_env(CHECKERS, 0);
    let mut tiny = [0.0; 1];
    let status = unsafe { cm3_env_observe(env, 0, tiny.as_mut_ptr(), 1, tiny.as_mut_ptr(), 1) };
    assert_eq!(status, Cm3Status::Mismatch);
    let mut rewards = [0.0; 2];
    let mut done = false;
    let actions = [99usize, 0];
    let status = unsafe { cm3_env_step(env, actions.as_ptr(), 2, rewards.as_mut_ptr(), 2, &mut done) };
    assert_ne!(status, Cm3Status::Ok);
    unsafe { cm3_env_free(env) };
    unsafe { cm3_env_free(ptr::null_mut()) };
    assert_eq!(unsafe { cm3_env_num_agents(ptr::null()) }, 0);
}

#[test]
fn truncated_error_message() {
    let bad = CString::new("not toml [").unwrap();
    let mut env = ptr::null_mut();
    assert_ne!(unsafe { cm3_env_new(bad.as_ptr(), 0, &mut env) }, Cm3Status::Ok);
    let mut buf = [0x7fu8; 4];
    let n = unsafe { cm3_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
    assert_eq!(n, 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn cooperation_probability_matches_closed_form() {
    let (mut mix, mut uniform) = (0.0, 0.0);
    assert_eq!(unsafe { cm3_cooperation_probability(0.5, &mut mix, &mut uniform) }, Cm3Status::Ok);
    assert!((mix - 390_625.0 / 33_554_432.0).abs() < 1e-15);
    assert!((uniform - 1.0 / 32_768.0).abs() < 1e-15);
    assert_eq!(unsafe { cm3_cooperation_probability(2.0, &mut mix, &mut uniform) }, Cm3Status::InvalidArgument);
}

#[test]
fn verify_suites() {
    let suite = CString::new("coop-prob").unwrap();
    let mut passed = false;
    assert_eq!(unsafe { cm3_verify(suite.as_ptr(), 0, 1, &mut passed) }, Cm3Status::Ok);
    assert!(passed);
    let suite = CString::new("identities").unwrap();
    assert_eq!(unsafe { cm3_verify(suite.as_ptr(), 1, 3, ptr::null_mut()) }, Cm3Status::Ok);
    let suite = CString::new("telepathy").unwrap();
    assert_eq!(unsafe { cm3_verify(suite.as_ptr(), 0, 1, &mut passed) }, Cm3Status::Parse);
}

#[test]
fn policy_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    let mut config = TrainerConfig::paper(EnvKind::Navigation, Stage::Two, Method::Iac);
    config.episodes = 2;
    config.final_eval_episodes = 0;
    let game = NavigationWorld::new(Default::default()).unwrap();
    let options = RunOptions {
        seed: 5,
        checkpoint_path: Some(path.clone()),
        ..Default::default()
    };
    run_stage2(&config, &game, None, Method::Iac, &options).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut policy = ptr::null_mut();
    assert_eq!(unsafe { cm3_policy_load(cpath.as_ptr(), &mut policy) }, Cm3Status::Ok, "{}", last_error());
    let env = new_env(NAV, 1);
    let agents = unsafe { cm3_env_num_agents(env) };
    let mut actions = vec![usize::MAX; agents];
    assert_eq!(unsafe { cm3_policy_act(policy, env, actions.as_mut_ptr(), agents) }, Cm3Status::Ok);
    for (i, a) in actions.iter().enumerate() {
        assert!(*a < unsafe { cm3_env_num_actions(env, i) });
    }
    assert_eq!(unsafe { cm3_policy_act(policy, env, actions.as_mut_ptr(), 0) }, Cm3Status::Mismatch);

    let mut first = Cm3EvalSummary::default();
    let mut second = Cm3EvalSummary::default();
    assert_eq!(unsafe { cm3_policy_evaluate(policy, env, 3, 9, &mut first) }, Cm3Status::Ok);
    assert_eq!(unsafe { cm3_policy_evaluate(policy, env, 3, 9, &mut second) }, Cm3Status::Ok);
    assert_eq!(first.episodes, 3);
    assert_eq!(first, second);
    assert_ne!(unsafe { cm3_policy_evaluate(policy, env, 0, 9, &mut first) }, Cm3Status::Ok);

    let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { cm3_policy_load(missing.as_ptr(), &mut other) }, Cm3Status::Io);
    unsafe {
        cm3_policy_free(policy);
        cm3_env_free(env);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cm3.h")).unwrap();
    for name in [
        "cm3_last_error_length",
        "cm3_last_error_message",
        "cm3_env_new",
        "cm3_env_free",
        "cm3_env_num_agents",
        "cm3_env_num_actions",
        "cm3_env_reset",
        "cm3_env_observation_len",
        "cm3_env_observe",
        "cm3_env_step",
        "cm3_policy_load",
        "cm3_policy_free",
        "cm3_policy_act",
        "cm3_policy_evaluate",
        "cm3_cooperation_probability",
        "cm3_verify",
        "typedef struct Cm3Env Cm3Env",
        "CM3_STATUS_CHECK_FAILED = 6",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
