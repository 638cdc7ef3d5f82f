use cm3::env::{ToyMatrixGame, ToyShape};
use cm3::gradients::Estimator;
use cm3::nn::{action_distribution, max_gradient_error, AugmentableNet, BranchSpec, LayerSpec, NetSpec, SideSpec};
use cm3::oracle::suites::random_two_agent_game;
use cm3::oracle::{
    baseline_zero_mean, check_identities, expected_estimator, relative_error, solve_tabular, target_gradient,
    TabularPolicy, DEFAULT_FD_STEP,
};
use cm3::trainer::{BufferMode, EpsilonSchedule, ReplayBuffer};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_game(rng: &mut ChaCha8Rng) -> ToyMatrixGame {
    let states = rng.random_range(2..=3);
    let sizes = vec![rng.random_range(2..=3), rng.random_range(2..=3)];
    let mut shape = ToyShape::new(states, sizes, rng.random_range(1..=3));
    shape.max_successors = 2;
    ToyMatrixGame::random(&shape, rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dynamic_programming_identities_hold(seed in any::<u64>(), epsilon in 0.0..0.5f64, shared in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = random_two_agent_game(20, &mut rng).unwrap();
        let shared = shared && game.action_sizes()[0] == game.action_sizes()[1];
        let policy = TabularPolicy::random(&game, shared, epsilon, 2.0, &mut rng).unwrap();
        let report = check_identities(&game, &solve_tabular(&game, &policy).unwrap());
        prop_assert!(report.max_residual() <= 1e-10, "{:?}", report.failed());
    }

    #[test]
    fn distributions_are_normalized(logits in prop::collection::vec(-30.0..30.0f64, 1..10), epsilon in 0.0..=1.0f64) {
        let p = action_distribution(&logits, epsilon);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let floor = epsilon / logits.len() as f64;
        prop_assert!(p.iter().all(|&x| x >= floor - 1e-15 && x <= 1.0 + 1e-15));
    }

    #[test]
    fn epsilon_schedule_is_monotone(start in 0.0..=1.0f64, frac in 0.0..=1.0f64, div in 1.0..1e5f64, steps in 0usize..5000) {
        let end = start * frac;
        let schedule = EpsilonSchedule::new(start, end, div);
        let (a, b) = (schedule.after(steps), schedule.after(steps + 1));
        prop_assert!(b <= a);
        prop_assert!(a <= start && a >= end);
        prop_assert_eq!(schedule.after(0), start);
        prop_assert_eq!(schedule.after(div.ceil() as usize + 1), end);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn estimator_expectations_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = small_game(&mut rng);
        let policy = TabularPolicy::random(&game, false, 0.1, 1.0, &mut rng).unwrap();
        for est in [Estimator::Cm3, Estimator::Coma, Estimator::Iac, Estimator::Qv] {
            let expected = expected_estimator(&game, &policy, est).unwrap();
            let fd = target_gradient(&game, &policy, est, DEFAULT_FD_STEP).unwrap();
            let err = relative_error(&expected, &fd);
            prop_assert!(err <= 1e-6, "{} off by {err}", est.name());
        }
        prop_assert!(baseline_zero_mean(&game, &policy).unwrap() <= 1e-12);
    }

    #[test]
    fn network_gradients_match_finite_differences(
        seed in any::<u64>(),
        height in 2usize..4,
        width in 2usize..4,
        channels in 1usize..3,
        dense in 1usize..5,
        augmented in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = height * width * channels;
        let spec = NetSpec {
            input_len: image + dense,
            branches: vec![
                BranchSpec {
                    inputs: vec![0..image],
                    layers: vec![LayerSpec::Conv { height, width, channels, kernel_h: 2, kernel_w: 2, filters: 2 }],
                },
                BranchSpec::dense(vec![image..image + dense], &[3]),
            ],
            trunk: vec![4, 3, 2],
        };
        let mut net = AugmentableNet::new(&spec, &mut rng).unwrap();
        let aug = augmented.then(|| Array2::from_shape_simple_fn((3, 2), || rng.random_range(-1.0..1.0)));
        if augmented {
            let side = SideSpec { input_len: 2, branch: BranchSpec::dense(vec![0..2], &[3]) };
            net = net.augment(&side, None, &mut rng).unwrap();
            net.randomize_bridge(&mut rng);
        }
        let main = Array2::from_shape_simple_fn((3, image + dense), || rng.random_range(-1.0..1.0));
        let upstream = Array2::from_shape_simple_fn((3, 2), || rng.random_range(-1.0..1.0));
        let err = max_gradient_error(&net, main.view(), aug.as_ref().map(|a| a.view()), &upstream, 1e-6).unwrap();
        prop_assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn replay_buffer_respects_capacity(capacity in 1usize..20, pushes in 0usize..60, reset in any::<bool>()) {
        use cm3::game::{DecomposedObservation, DecomposedState, Transition};
        let mode = if reset { BufferMode::ResetAfterTraining } else { BufferMode::Circular };
        let mut buffer = ReplayBuffer::new(capacity, mode);
        let state = DecomposedState { env_part: vec![], agent_parts: vec![vec![]] };
        let obs = vec![DecomposedObservation { self_part: vec![], others_part: vec![] }];
        for i in 0..pushes {
            buffer.push(Transition {
                state: state.clone(),
                observations: obs.clone(),
                goals: vec![vec![]],
                actions: vec![0],
                rewards: vec![i as f64],
                next_state: state.clone(),
                next_observations: obs.clone(),
                terminal: false,
            });
            prop_assert!(buffer.len() <= capacity);
        }
        prop_assert_eq!(buffer.len(), pushes.min(capacity));
        let mut rng = ChaCha8Rng::seed_from_u64(pushes as u64);
        let sample = buffer.sample(capacity + 5, &mut rng);
        let oldest_kept = pushes.saturating_sub(capacity) as f64;
        prop_assert!(sample.iter().all(|t| t.rewards[0] >= oldest_kept));
        buffer.after_training();
        prop_assert_eq!(buffer.is_empty(), reset || pushes == 0);
    }
}
