//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use cm3::env::checkers::{checkers_reward, Cell, Role};
use cm3::env::lane_merge::{merge_reward, MergeEvent, GRID_CHANNELS, GRID_COLS, GRID_ROWS};
use cm3::env::navigation::{nav_reward, spawn_formation};
use cm3::env::{
    CheckersConfig, CheckersWorld, EnvKind, Formation, LaneMergeWorld, MergeConfig, NavConfig, NavigationWorld,
};
use cm3::game::{induce_single_agent_mdp, MultiGoalGame};
use cm3::nn::{max_gradient_error, AugmentableNet, BranchSpec, LayerSpec, NetSpec, SideSpec, Stage};
use cm3::oracle::{cooperation_probability, run_suite, Suite};
use cm3::trainer::{run_stage1, run_stage2, Learner, Method, RunOptions, TrainEvery, TrainerConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRAINING_SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> cm3::Result<Outcome>;

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn identities() -> cm3::Result<Outcome> {
    let start = Instant::now();
    let report = run_suite(Suite::Identities, 0, 50)?;
    let worst = report.max_value("identities/");
    let fast = within(start.elapsed(), 60);
    Ok(Outcome::new(
        report.passed && report.checks.len() >= 50 && worst <= 1e-10 && fast,
        format!("{} games, max residual {worst:.2e} (bound 1e-10)", report.checks.len()),
    ))
}

fn unbiasedness() -> cm3::Result<Outcome> {
    let start = Instant::now();
    let report = run_suite(Suite::Gradients, 0, 20)?;
    let worst = report.max_value("unbiased/");
    let games = report.checks.iter().filter(|c| c.name.starts_with("baseline/")).count();
    let fast = within(start.elapsed(), 300);
    Ok(Outcome::new(
        worst <= 1e-6 && games >= 20 && fast,
        format!("{games} games x 4 estimators, max relative error {worst:.2e} (bound 1e-6)"),
    ))
}

fn baseline_zero_mean() -> cm3::Result<Outcome> {
    let report = run_suite(Suite::Gradients, 1, 20)?;
    let worst = report.max_value("baseline/");
    Ok(Outcome::new(worst <= 1e-12, format!("max |E[score * baseline]| {worst:.2e} (bound 1e-12)")))
}

fn variance() -> cm3::Result<Outcome> {
    let report = run_suite(Suite::Variance, 0, 100_000)?;
    let gaps: Vec<String> = report.checks.iter().map(|c| format!("{} {:.2} se", c.name, c.value)).collect();
    Ok(Outcome::new(report.passed, format!("{} (bound 3 se, 1e5 samples)", gaps.join(", "))))
}

fn cooperation() -> cm3::Result<Outcome> {
    let p = cooperation_probability(0.5)?;
    let exact = 390_625.0 / 33_554_432.0;
    let mix_gap = (p.greedy_mix - exact).abs();
    let uniform_gap = (p.uniform - 3.0518e-5).abs();
    let rounded_gap = (p.greedy_mix - 0.011642).abs();
    Ok(Outcome::new(
        mix_gap <= 1e-9 && uniform_gap <= 1e-9 && rounded_gap <= 5e-7,
        format!(
            "eps=0.5: {:.12} (|x - 390625/2^25| {mix_gap:.1e}, |x - 0.011642| {rounded_gap:.1e}); uniform {:.6e} (|x - 3.0518e-5| {uniform_gap:.1e})",
            p.greedy_mix, p.uniform
        ),
    ))
}

fn random_net(conv: bool, rng: &mut ChaCha8Rng) -> cm3::Result<(AugmentableNet, usize)> {
    let dense_in = rng.random_range(2..6);
    let mut branches = vec![];
    let mut input_len = 0;
    if conv {
        let (h, w, c) = (rng.random_range(3..6), rng.random_range(3..6), rng.random_range(1..4));
        branches.push(BranchSpec {
            inputs: vec![0..h * w * c],
            layers: vec![
                LayerSpec::Conv {
                    height: h,
                    width: w,
                    channels: c,
                    kernel_h: rng.random_range(1..=h.min(3)),
                    kernel_w: rng.random_range(1..=w.min(3)),
                    filters: rng.random_range(1..4),
                },
                LayerSpec::Dense { units: 5 },
            ],
        });
        input_len = h * w * c;
    }
    branches.push(BranchSpec::dense(vec![input_len..input_len + dense_in], &[rng.random_range(2..6)]));
    input_len += dense_in;
    let spec = NetSpec {
        input_len,
        branches,
        trunk: vec![rng.random_range(3..8), rng.random_range(3..8), rng.random_range(1..5)],
    };
    Ok((AugmentableNet::new(&spec, rng)?, input_len))
}

fn network_gradients() -> cm3::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut nets = 0;
    for conv in [false, true] {
        for augmented in [false, true] {
            for _ in 0..5 {
                let (mut net, input_len) = random_net(conv, &mut rng)?;
                let rows = 4;
                let aug = if augmented {
                    let side = SideSpec {
                        input_len: 3,
                        branch: BranchSpec::dense(vec![0..3], &[4]),
                    };
                    net = net.augment(&side, None, &mut rng)?;
                    net.randomize_bridge(&mut rng);
                    Some(Array2::from_shape_simple_fn((rows, 3), || rng.random_range(-1.0..1.0)))
                } else {
                    None
                };
                let main = Array2::from_shape_simple_fn((rows, input_len), || rng.random_range(-1.0..1.0));
                let upstream =
                    Array2::from_shape_simple_fn((rows, net.output_len()), || rng.random_range(-1.0..1.0));
                let err = max_gradient_error(&net, main.view(), aug.as_ref().map(|a| a.view()), &upstream, 1e-6)?;
                worst = worst.max(err);
                nets += 1;
            }
        }
    }
    Ok(Outcome::new(
        worst <= 1e-4,
        format!("{nets} dense/conv nets, max relative error {worst:.2e} (bound 1e-4)"),
    ))
}

fn hand_off_gap<G: MultiGoalGame>(game: &G, rng: &mut ChaCha8Rng) -> cm3::Result<f64> {
    let kind = game.kind();
    let layout = game.layout();
    let discount = 0.99;
    let one_cfg = TrainerConfig::paper(kind.unwrap_or(EnvKind::Navigation), Stage::One, Method::Cm3);
    let stage_one = Learner::stage_one(kind, &layout, discount, &one_cfg, rng)?;
    let ckpt = stage_one.to_checkpoint()?;
    let two_cfg = TrainerConfig::paper(kind.unwrap_or(EnvKind::Navigation), Stage::Two, Method::Cm3);
    let num_agents = game.spec().num_agents;
    let stage_two = Learner::stage_two(kind, &layout, num_agents, discount, &two_cfg, Some(&ckpt), rng)?;
    let main_len = layout.obs_self + layout.goal;
    let main = Array2::from_shape_simple_fn((1000, main_len), || rng.random_range(-2.0..2.0));
    let aug = Array2::from_shape_simple_fn((1000, layout.obs_others), || rng.random_range(-2.0..2.0));
    let before = stage_one.policy.net.predict(main.view(), None)?;
    let after = stage_two.policy.net.predict(main.view(), Some(aug.view()))?;
    Ok((before - after).iter().fold(0.0f64, |m, d| m.max(d.abs())))
}

fn hand_off() -> cm3::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gaps = [
        hand_off_gap(&NavigationWorld::new(NavConfig::default())?, &mut rng)?,
        hand_off_gap(&LaneMergeWorld::new(MergeConfig::default())?, &mut rng)?,
        hand_off_gap(&CheckersWorld::new(CheckersConfig::default())?, &mut rng)?,
    ];
    let worst = gaps.iter().fold(0.0f64, |m, g| m.max(*g));
    Ok(Outcome::new(
        worst <= 1e-12,
        format!("navigation/lane-merge/checkers, 1000 inputs each, max |diff| {worst:.1e} (bound 1e-12)"),
    ))
}

fn stage_one_navigation() -> cm3::Result<Outcome> {
    let start = Instant::now();
    let single = induce_single_agent_mdp(&NavigationWorld::new(NavConfig::default())?)?;
    let mut config = TrainerConfig::paper(EnvKind::Navigation, Stage::One, Method::Cm3);
    config.eval_every = 0;
    config.final_eval_episodes = 100;
    let mut rates = vec![];
    for seed in TRAINING_SEEDS {
        let outcome = run_stage1(&config, &single, &RunOptions { seed, ..Default::default() })?;
        rates.push(outcome.final_eval.expect("final evaluation requested").success_rate);
    }
    let passes = rates.iter().filter(|r| **r >= 0.85).count();
    let elapsed = start.elapsed();
    Ok(Outcome::new(
        passes >= 2 && within(elapsed / TRAINING_SEEDS.len() as u32, 600),
        format!(
            "success rates {rates:?}, {passes}/3 seeds >= 0.85 (need 2), {:.0}s",
            elapsed.as_secs_f64()
        ),
    ))
}

fn merge_navigation() -> cm3::Result<Outcome> {
    let start = Instant::now();
    let game = NavigationWorld::new(NavConfig::default())?;
    let single = induce_single_agent_mdp(&game)?;
    let one_cfg = TrainerConfig::paper(EnvKind::Navigation, Stage::One, Method::Cm3);
    let mut returns = [vec![], vec![]];
    for seed in TRAINING_SEEDS {
        let options = RunOptions { seed, ..Default::default() };
        let stage_one = run_stage1(&one_cfg, &single, &options)?;
        for (slot, method) in [Method::Cm3, Method::Direct].into_iter().enumerate() {
            let mut cfg = TrainerConfig::paper(EnvKind::Navigation, Stage::Two, method);
            cfg.episodes = 10_000;
            cfg.eval_every = 0;
            cfg.final_eval_episodes = 100;
            let outcome = run_stage2(&cfg, &game, Some(&stage_one.checkpoint), method, &options)?;
            returns[slot].push(outcome.final_eval.expect("final evaluation requested").joint_return);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (cm3, direct) = (mean(&returns[0]), mean(&returns[1]));
    let elapsed = start.elapsed();
    Ok(Outcome::new(
        cm3 > direct && within(elapsed, 7200),
        format!(
            "mean joint return at 10k episodes: CM3 {cm3:.2} {:?} vs Direct {direct:.2} {:?}, {:.0}s",
            returns[0].iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>(),
            returns[1].iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    ))
}

/// Network widths relative to the full-board presets.
const SHRUNK_CHECKERS_WIDTH: f64 = 0.25;
const SHRUNK_CHECKERS_STAGE_ONE: usize = 2_000;
const SHRUNK_CHECKERS_EPISODES: usize = 15_000;
const SHRUNK_CHECKERS_EVAL_EVERY: usize = 1_000;

fn shrunk_checkers() -> cm3::Result<Outcome> {
    let start = Instant::now();
    let game = CheckersWorld::new(CheckersConfig::shrunk())?;
    let optimum = game.optimal_score();
    let single = induce_single_agent_mdp(&game)?;
    let mut one_cfg = TrainerConfig::paper(EnvKind::Checkers, Stage::One, Method::Cm3);
    one_cfg.episodes = SHRUNK_CHECKERS_STAGE_ONE;
    one_cfg.width_scale = SHRUNK_CHECKERS_WIDTH;
    one_cfg.eval_every = 0;
    one_cfg.final_eval_episodes = 0;
    let mut cfg = TrainerConfig::paper(EnvKind::Checkers, Stage::Two, Method::Cm3);
    cfg.episodes = SHRUNK_CHECKERS_EPISODES;
    cfg.width_scale = SHRUNK_CHECKERS_WIDTH;
    cfg.eval_every = SHRUNK_CHECKERS_EVAL_EVERY;
    cfg.eval_episodes = 10;
    cfg.final_eval_episodes = 10;
    cfg.lr_policy = 3e-4;
    cfg.train_every = TrainEvery::Steps(5);
    cfg.epsilon_start = 1.0;
    cfg.epsilon_end = 0.05;
    cfg.epsilon_div = 1e4;
    let mut best = vec![];
    for seed in TRAINING_SEEDS {
        let misses = best.iter().filter(|b| **b < 10.0).count();
        if misses >= 2 {
            break;
        }
        let options = RunOptions { seed, ..Default::default() };
        let stage_one = run_stage1(&one_cfg, &single, &options)?;
        let outcome = run_stage2(&cfg, &game, Some(&stage_one.checkpoint), Method::Cm3, &options)?;
        let peak = outcome
            .metrics
            .iter()
            .map(|m| m.joint_return)
            .chain(outcome.final_eval.map(|e| e.joint_return))
            .fold(f64::NEG_INFINITY, f64::max);
        best.push(peak);
    }
    let passes = best.iter().filter(|b| **b >= 10.0).count();
    Ok(Outcome::new(
        optimum == 12.0 && passes >= 2,
        format!(
            "best evaluation score per seed {best:?} (optimum {optimum}), {passes}/{} >= 10 (need 2 of 3), {:.0}s",
            best.len(),
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn conformance() -> cm3::Result<Outcome> {
    let mut failures = vec![];
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    let mut lane = LaneMergeWorld::new(MergeConfig::default())?;
    lane.reset(&mut ChaCha8Rng::seed_from_u64(0))?;
    expect((GRID_ROWS, GRID_COLS, GRID_CHANNELS) == (13, 9, 2), "lane grid dimensions");
    expect(lane.occupancy_grid(0).len() == 13 * 9 * 2, "lane grid length");
    expect(lane.observe(0).others_part.len() == 13 * 9 * 2, "lane o_others length");
    let lane_rewards = [
        (MergeEvent::Arrival { delta: 0.0 }, 10.0),
        (MergeEvent::Arrival { delta: 0.5 }, 5.0),
        (MergeEvent::Arrival { delta: 1.0 }, 0.0),
        (MergeEvent::Timeout, -10.0),
        (MergeEvent::Collision, -1.0),
        (MergeEvent::Overspeed, -0.1),
        (MergeEvent::None, 0.0),
    ];
    for (event, value) in lane_rewards {
        expect(merge_reward(event)? == value, &format!("lane reward {event:?}"));
    }

    let table = [
        (Role::A, Cell::Red, 1.0),
        (Role::A, Cell::Yellow, -0.5),
        (Role::B, Cell::Red, -0.5),
        (Role::B, Cell::Yellow, 1.0),
        (Role::A, Cell::Empty, 0.0),
        (Role::B, Cell::Empty, 0.0),
    ];
    for (role, cell, value) in table {
        expect(checkers_reward(role, cell) == value, &format!("checkers reward {role:?}/{cell:?}"));
    }
    let full = CheckersWorld::new(CheckersConfig::default())?;
    expect(full.optimal_score() == 24.0, "full-board optimum");
    let mut scripted = full.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    scripted.reset(&mut rng)?;
    let mut score = 0.0;
    for _ in 0..full.spec().horizon {
        let actions = scripted.hand_coded_actions();
        let step = scripted.step(&actions, &mut rng)?;
        score += step.rewards.iter().sum::<f64>();
        if step.done() {
            break;
        }
    }
    expect(score == 24.0, "hand-coded checkers score");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let formations = [
        (
            Formation::Antipodal,
            vec![[0.9, 0.9], [-0.9, -0.9], [0.9, -0.9], [-0.9, 0.9]],
            vec![[-0.9, -0.9], [0.9, 0.9], [-0.9, 0.9], [0.9, -0.9]],
        ),
        (
            Formation::Cross,
            vec![[0.9, -0.15], [-0.9, 0.15], [0.15, 0.9], [-0.15, -0.9]],
            vec![[-0.9, -0.15], [0.9, 0.15], [0.15, -0.9], [-0.15, 0.9]],
        ),
        (Formation::Merge, vec![[0.9, -0.2], [0.9, 0.2]], vec![[-0.9, 0.2], [-0.9, -0.2]]),
    ];
    for (formation, landmarks, starts) in formations {
        let spawned = spawn_formation(formation, starts.len(), &mut rng)?;
        expect(spawned.landmarks == landmarks, &format!("{formation:?} landmarks"));
        expect(spawned.starts == starts, &format!("{formation:?} starts"));
    }
    expect((nav_reward([0.0, 0.0], [0.9, 0.9], false) + (1.62f64).sqrt()).abs() < 1e-15, "navigation reward");

    Ok(Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            "lane grid 13x9x2, lane/checkers reward tables, formation coordinates, checkers optimum 24".to_string()
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    ))
}

fn main() {
    let criteria: [(&str, Check); 11] = [
        ("identities on random games", identities),
        ("unbiased gradient estimators", unbiasedness),
        ("baseline zero mean", baseline_zero_mean),
        ("closed-form variances", variance),
        ("cooperation probability", cooperation),
        ("network gradients", network_gradients),
        ("curriculum hand-off", hand_off),
        ("stage-one navigation", stage_one_navigation),
        ("merge navigation CM3 vs Direct", merge_navigation),
        ("shrunk checkers", shrunk_checkers),
        ("environment conformance", conformance),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !only.is_empty() && !only.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {number:>2} {verdict} {name}: {} [{:.1}s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!outcome.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
