//! Randomized verification suites over enumerable games.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ToyMatrixGame, ToyShape};
use crate::error::{Error, Result};
use crate::gradients::Estimator;

use super::coop::cooperation_probability;
use super::enumerate::{expected_estimator, relative_error, target_gradient, DEFAULT_FD_STEP};
use super::identities::{check_identities, IDENTITY_TOLERANCE};
use super::tabular::{solve_tabular, TabularPolicy};
use super::variance::{baseline_zero_mean, exact_variance, monte_carlo};

pub const UNBIASED_TOLERANCE: f64 = 1e-6;
pub const BASELINE_TOLERANCE: f64 = 1e-12;
pub const COOP_TOLERANCE: f64 = 1e-9;
/// Allowed gap between closed-form and sampled variance, in standard errors.
pub const VARIANCE_SE_BOUND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Gradients,
    Variance,
    CoopProb,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Identities, Suite::Gradients, Suite::Variance, Suite::CoopProb];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Gradients => "gradients",
            Suite::Variance => "variance",
            Suite::CoopProb => "coop-prob",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::Unknown {
                kind: "suite",
                name: s.to_string(),
            })
    }
}

/// One measured quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, seed: u64, checks: Vec<Check>) -> Self {
        Self {
            suite,
            seed,
            passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
            checks,
        }
    }

    /// Largest value among checks whose name starts with `prefix`.
    pub fn max_value(&self, prefix: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .fold(0.0, |m, c| m.max(c.value))
    }
}

/// A two-agent game with 2..=`max_states` states, 2..=3 actions per agent and horizon 1..=5.
pub fn random_two_agent_game(max_states: usize, rng: &mut dyn RngCore) -> Result<ToyMatrixGame> {
    let num_states = rng.random_range(2..=max_states.max(2));
    let sizes = vec![rng.random_range(2..=3), rng.random_range(2..=3)];
    let mut shape = ToyShape::new(num_states, sizes, rng.random_range(1..=5));
    shape.discount = rng.random_range(0.5..0.99);
    shape.max_successors = rng.random_range(1..=num_states.min(4));
    shape.terminal_prob = rng.random_range(0.0..0.3);
    if rng.random_bool(0.3) {
        shape.num_observations = Some(rng.random_range(1..=num_states));
    }
    ToyMatrixGame::random(&shape, rng)
}

/// A game small enough to enumerate every trajectory quickly.
fn small_game(rng: &mut dyn RngCore) -> Result<ToyMatrixGame> {
    let num_states = rng.random_range(2..=4);
    let sizes = vec![rng.random_range(2..=3), rng.random_range(2..=3)];
    let mut shape = ToyShape::new(num_states, sizes, rng.random_range(1..=3));
    shape.max_successors = 2;
    shape.terminal_prob = rng.random_range(0.0..0.3);
    ToyMatrixGame::random(&shape, rng)
}

/// Bellman and credit/value identities on `trials` random games.
pub fn identity_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::with_capacity(trials);
    for trial in 0..trials {
        let game = random_two_agent_game(20, &mut rng)?;
        let shared = rng.random_bool(0.5) && game.action_sizes()[0] == game.action_sizes()[1];
        let policy = TabularPolicy::random(&game, shared, rng.random_range(0.0..0.5), 2.0, &mut rng)?;
        let report = check_identities(&game, &solve_tabular(&game, &policy)?);
        checks.push(Check::at_most(
            format!("identities/game{trial}"),
            report.max_residual(),
            IDENTITY_TOLERANCE,
        ));
    }
    Ok(SuiteReport::new(Suite::Identities, seed, checks))
}

/// Exact estimator expectations against finite-difference gradients, plus baseline zero-mean.
pub fn gradient_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for trial in 0..trials {
        let game = small_game(&mut rng)?;
        let policy = TabularPolicy::random(&game, false, rng.random_range(0.0..0.3), 1.0, &mut rng)?;
        for est in [Estimator::Cm3, Estimator::Coma, Estimator::Iac, Estimator::Qv] {
            let expected = expected_estimator(&game, &policy, est)?;
            let fd = target_gradient(&game, &policy, est, DEFAULT_FD_STEP)?;
            checks.push(Check::at_most(
                format!("unbiased/{}/game{trial}", est.name()),
                relative_error(&expected, &fd),
                UNBIASED_TOLERANCE,
            ));
        }
        checks.push(Check::at_most(
            format!("baseline/game{trial}"),
            baseline_zero_mean(&game, &policy)?,
            BASELINE_TOLERANCE,
        ));
    }
    Ok(SuiteReport::new(Suite::Gradients, seed, checks))
}

/// The fixed two-agent game the variance suite samples from.
pub fn variance_game() -> Result<(ToyMatrixGame, TabularPolicy)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut shape = ToyShape::new(3, vec![2, 2], 2);
    shape.max_successors = 2;
    let game = ToyMatrixGame::random(&shape, &mut rng)?;
    let policy = TabularPolicy::random(&game, false, 0.1, 1.0, &mut rng)?;
    Ok((game, policy))
}

/// Closed-form COMA and CM3 variances against `samples` Monte-Carlo draws.
pub fn variance_suite(seed: u64, samples: usize) -> Result<SuiteReport> {
    let (game, policy) = variance_game()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for est in [Estimator::Coma, Estimator::Cm3] {
        let exact = exact_variance(&game, &policy, est)?;
        let mc = monte_carlo(&game, &policy, est, samples, &mut rng)?;
        let gap = (mc.variance - exact.variance).abs() / mc.variance_se.max(f64::MIN_POSITIVE);
        checks.push(Check::at_most(format!("variance/{}", est.name()), gap, VARIANCE_SE_BOUND));
    }
    Ok(SuiteReport::new(Suite::Variance, seed, checks))
}

/// Closed-form cooperation probabilities against exact rationals.
pub fn coop_suite() -> Result<SuiteReport> {
    let p = cooperation_probability(0.5)?;
    let checks = vec![
        Check::at_most("coop/epsilon-0.5", (p.greedy_mix - 390_625.0 / 33_554_432.0).abs(), COOP_TOLERANCE),
        Check::at_most("coop/epsilon-0.5-rounded", (p.greedy_mix - 0.011642).abs(), 5e-7),
        Check::at_most("coop/uniform", (p.uniform - 1.0 / 32_768.0).abs(), COOP_TOLERANCE),
        Check::at_most("coop/uniform-rounded", (p.uniform - 3.0518e-5).abs(), COOP_TOLERANCE),
    ];
    Ok(SuiteReport::new(Suite::CoopProb, 0, checks))
}

/// Dispatch by suite; `trials` counts games, or Monte-Carlo samples for the variance suite.
pub fn run_suite(suite: Suite, seed: u64, trials: usize) -> Result<SuiteReport> {
    match suite {
        Suite::Identities => identity_suite(seed, trials),
        Suite::Gradients => gradient_suite(seed, trials),
        Suite::Variance => variance_suite(seed, trials),
        Suite::CoopProb => coop_suite(),
    }
}
