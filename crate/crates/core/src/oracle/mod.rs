//! Exact ground truth on small enumerable games.

pub mod coop;
pub mod enumerate;
pub mod identities;
pub mod suites;
pub mod tabular;
pub mod variance;

pub use coop::{cooperation_probability, CooperationProbability};
pub use enumerate::{
    exact_objective_and_gradient, expected_estimator, finite_difference_gradient, goal_objectives,
    relative_error, target_gradient, ObjectiveReport, DEFAULT_FD_STEP, DEFAULT_TRAJECTORY_BOUND,
};
pub use identities::{check_identities, Identity, IdentityReport, IDENTITY_TOLERANCE};
pub use tabular::{solve_tabular, TabularPolicy, TabularSolution};
pub use variance::{baseline_zero_mean, exact_variance, monte_carlo, MonteCarloReport, VarianceReport};
pub use suites::{run_suite, Check, Suite, SuiteReport};
