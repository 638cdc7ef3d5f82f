//! Residuals of the relations linking values, joint action-values and
//! credit functions.

use serde::{Deserialize, Serialize};

use crate::env::ToyMatrixGame;
use crate::game::decode_joint_action;

use super::tabular::TabularSolution;

pub const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// credit_{n,m}(s,aᵐ) = E[Rⁿ + γ·Σ πᵐ(a′ᵐ)credit_{n,m}(s′,a′ᵐ)].
    CreditBellman,
    /// V_n(s) = Σ_{aᵐ} πᵐ(aᵐ)·credit_{n,m}(s,aᵐ) for every m.
    ValueFromCredit,
    /// credit_{n,m}(s,aᵐ) = Σ_{a⁻ᵐ} π(a⁻ᵐ)·Q_n(s,a⃗).
    CreditFromJoint,
    /// V_n(s) = Σ_a⃗ π(a⃗)·Q_n(s,a⃗).
    ValueFromJoint,
    /// Q_n(s,a⃗) = Rⁿ(s,a⃗) + γ·Σ P(s′|s,a⃗)·V_n(s′).
    JointBellman,
}

impl Identity {
    pub const ALL: [Identity; 5] = [
        Identity::CreditBellman,
        Identity::ValueFromCredit,
        Identity::CreditFromJoint,
        Identity::ValueFromJoint,
        Identity::JointBellman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::CreditBellman => "credit_bellman",
            Identity::ValueFromCredit => "value_from_credit",
            Identity::CreditFromJoint => "credit_from_joint",
            Identity::ValueFromJoint => "value_from_joint",
            Identity::JointBellman => "joint_bellman",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub identity: Identity,
    pub max_abs: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub tolerance: f64,
    pub residuals: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.passed)
    }

    pub fn residual(&self, identity: Identity) -> f64 {
        self.residuals
            .iter()
            .find(|r| r.identity == identity)
            .map_or(f64::NAN, |r| r.max_abs)
    }

    pub fn failed(&self) -> Vec<Identity> {
        self.residuals.iter().filter(|r| !r.passed).map(|r| r.identity).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.max_abs))
    }
}

/// Max absolute residual of each identity over every step, goal, agent,
/// non-terminal state and action.
pub fn check_identities(game: &ToyMatrixGame, sol: &TabularSolution) -> IdentityReport {
    let n_agents = sol.num_agents();
    let sizes = game.action_sizes();
    let joint = game.num_joint_actions();
    let decoded: Vec<Vec<usize>> = (0..joint).map(|j| decode_joint_action(j, sizes)).collect();
    let gamma = sol.discount;
    let mut worst = [0.0f64; 5];
    let mut note = |id: usize, r: f64| {
        let r = r.abs();
        if r > worst[id] || r.is_nan() {
            worst[id] = r;
        }
    };

    for t in 0..sol.horizon {
        for n in 0..n_agents {
            for s in 0..game.num_states {
                if game.terminal[s] {
                    continue;
                }
                let v = sol.values[t][n][s];
                let from_joint: f64 = (0..joint).map(|j| sol.joint_probs[s][j] * sol.joint_q[t][n][s][j]).sum();
                note(3, v - from_joint);

                for j in 0..joint {
                    let tail: f64 = (0..game.num_states)
                        .filter(|&s2| !game.terminal[s2])
                        .map(|s2| game.transitions[s][j][s2] * sol.values[t + 1][n][s2])
                        .sum();
                    note(4, sol.joint_q[t][n][s][j] - game.reward(n, s, j) - gamma * tail);
                }

                for m in 0..n_agents {
                    note(1, v - sol.credit_baseline(t, n, m, s));
                    for am in 0..sizes[m] {
                        let mut marginal = 0.0;
                        let mut backup = 0.0;
                        for (j, acts) in decoded.iter().enumerate() {
                            if acts[m] != am {
                                continue;
                            }
                            let others: f64 = acts
                                .iter()
                                .enumerate()
                                .filter(|(k, _)| *k != m)
                                .map(|(k, &a)| sol.agent_probs[k][s][a])
                                .product();
                            marginal += others * sol.joint_q[t][n][s][j];
                            let tail: f64 = (0..game.num_states)
                                .filter(|&s2| !game.terminal[s2])
                                .map(|s2| game.transitions[s][j][s2] * sol.credit_baseline(t + 1, n, m, s2))
                                .sum();
                            backup += others * (game.reward(n, s, j) + gamma * tail);
                        }
                        let c = sol.credit[t][n][m][s][am];
                        note(0, c - backup);
                        note(2, c - marginal);
                    }
                }
            }
        }
    }

    IdentityReport {
        tolerance: IDENTITY_TOLERANCE,
        residuals: Identity::ALL
            .iter()
            .zip(worst)
            .map(|(&identity, max_abs)| IdentityResidual {
                identity,
                max_abs,
                passed: max_abs <= IDENTITY_TOLERANCE,
            })
            .collect(),
    }
}
