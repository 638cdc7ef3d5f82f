//! Exact and Monte-Carlo variance of single-sample gradient estimators.
//!
//! A sample draws (t, s) with probability γᵗρ_t(s)/Z, then a⃗ ~ π(·|s), and
//! returns Σ weight·∇log π^agent. Its mean is ∇J/Z, where Z is the
//! `normalizer` in every report.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env::ToyMatrixGame;
use crate::error::{Error, Result};
use crate::game::decode_joint_action;
use crate::gradients::Estimator;

use super::enumerate::{discounted_occupancy, sample_gradient, score_terms, score_vector, ScoreTerm};
use super::tabular::{solve_tabular, TabularPolicy, TabularSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub estimator: Estimator,
    pub normalizer: f64,
    pub mean: Vec<f64>,
    /// E‖g‖².
    pub second_moment: f64,
    /// Trace of the covariance, E‖g‖² − ‖E g‖².
    pub variance: f64,
    pub terms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub samples: usize,
    pub normalizer: f64,
    pub mean: Vec<f64>,
    /// Unbiased sample estimate of the covariance trace.
    pub variance: f64,
    /// Standard error of `variance`.
    pub variance_se: f64,
}

struct Sample {
    t: usize,
    s: usize,
    joint: usize,
    prob: f64,
}

fn sampling_distribution(game: &ToyMatrixGame, sol: &TabularSolution) -> (Vec<Sample>, f64) {
    let weights = discounted_occupancy(game, sol);
    let normalizer: f64 = weights.iter().flatten().sum();
    let mut out = Vec::new();
    for (t, row) in weights.iter().enumerate() {
        for (s, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for j in 0..game.num_joint_actions() {
                let p = w * sol.joint_probs[s][j] / normalizer;
                if p > 0.0 {
                    out.push(Sample { t, s, joint: j, prob: p });
                }
            }
        }
    }
    (out, normalizer)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn term_vectors(policy: &TabularPolicy, s: usize, acts: &[usize], terms: &[ScoreTerm]) -> Vec<Vec<f64>> {
    terms
        .iter()
        .map(|term| {
            score_vector(policy, term.agent, s, acts[term.agent])
                .into_iter()
                .map(|z| z * term.weight)
                .collect()
        })
        .collect()
}

/// Exact variance with the per-term breakdown for CM3 (pairs h_{nm}) and
/// COMA (per-agent f_n split into its squared, cross and mean parts).
pub fn exact_variance(game: &ToyMatrixGame, policy: &TabularPolicy, estimator: Estimator) -> Result<VarianceReport> {
    if !matches!(estimator, Estimator::Cm3 | Estimator::Coma | Estimator::Qv) {
        return Err(Error::InvalidArgument(format!(
            "no variance decomposition for {}",
            estimator.name()
        )));
    }
    let sol = solve_tabular(game, policy)?;
    let (samples, normalizer) = sampling_distribution(game, &sol);
    let k = policy.num_params();
    let n_agents = game.num_agents();
    let term_count = match estimator {
        Estimator::Coma => n_agents,
        _ => n_agents * n_agents,
    };

    let mut mean = vec![0.0; k];
    let mut second = 0.0;
    let mut term_means = vec![vec![0.0; k]; term_count];
    let mut gram = vec![vec![0.0; term_count]; term_count];
    let mut coma_parts = [0.0f64; 3];

    for smp in &samples {
        let acts = decode_joint_action(smp.joint, game.action_sizes());
        let terms = score_terms(estimator, game, &sol, smp.t, smp.s, smp.joint);
        let vecs = term_vectors(policy, smp.s, &acts, &terms);
        let g = sample_gradient(estimator, game, policy, &sol, smp.t, smp.s, smp.joint);
        second += smp.prob * dot(&g, &g);
        for (m, v) in mean.iter_mut().zip(&g) {
            *m += smp.prob * v;
        }
        for (i, vi) in vecs.iter().enumerate() {
            for (acc, x) in term_means[i].iter_mut().zip(vi) {
                *acc += smp.prob * x;
            }
            for (j, vj) in vecs.iter().enumerate() {
                gram[i][j] += smp.prob * dot(vi, vj);
            }
        }
        if estimator == Estimator::Coma {
            let q: f64 = (0..n_agents).map(|n| sol.joint_q[smp.t][n][smp.s][smp.joint]).sum();
            for (n, term) in terms.iter().enumerate() {
                let z = score_vector(policy, n, smp.s, acts[n]);
                let zz = dot(&z, &z);
                let b = q - term.weight;
                coma_parts[0] += smp.prob * zz * q * q;
                coma_parts[1] += smp.prob * -2.0 * b * zz * q;
                coma_parts[2] += smp.prob * b * b * zz;
            }
        }
    }

    let variance = second - dot(&mean, &mean);
    let cov = |i: usize, j: usize| gram[i][j] - dot(&term_means[i], &term_means[j]);
    let mut terms = BTreeMap::new();
    match estimator {
        Estimator::Coma => {
            let cross: f64 = (0..n_agents)
                .flat_map(|n| (0..n_agents).filter(move |&m| m != n).map(move |m| (n, m)))
                .map(|(n, m)| gram[n][m])
                .sum();
            let total_mean: f64 = (0..n_agents)
                .flat_map(|n| (0..n_agents).map(move |m| (n, m)))
                .map(|(n, m)| dot(&term_means[n], &term_means[m]))
                .sum();
            terms.insert("q_squared".into(), coma_parts[0]);
            terms.insert("q_baseline".into(), coma_parts[1]);
            terms.insert("baseline_squared".into(), coma_parts[2]);
            terms.insert("cross_agent".into(), cross);
            terms.insert("mean_product".into(), total_mean);
            terms.insert(
                "decomposed_variance".into(),
                coma_parts.iter().sum::<f64>() + cross - total_mean,
            );
        }
        _ => {
            let idx = |n: usize, m: usize| n * n_agents + m;
            let mut pair = 0.0;
            let mut within = 0.0;
            let mut across = 0.0;
            for n in 0..n_agents {
                for m in 0..n_agents {
                    pair += cov(idx(n, m), idx(n, m));
                    for kk in 0..n_agents {
                        if kk != m {
                            within += cov(idx(n, m), idx(n, kk));
                        }
                    }
                    for n2 in 0..n_agents {
                        if n2 != n {
                            for m2 in 0..n_agents {
                                across += cov(idx(n, m), idx(n2, m2));
                            }
                        }
                    }
                }
            }
            terms.insert("pair_variance".into(), pair);
            terms.insert("within_goal_covariance".into(), within);
            terms.insert("cross_goal_covariance".into(), across);
            terms.insert("decomposed_variance".into(), pair + within + across);
        }
    }

    Ok(VarianceReport {
        estimator,
        normalizer,
        mean,
        second_moment: second,
        variance,
        terms,
    })
}

/// Largest component of E[∇log πᵐ(aᵐ)·b] over both baseline forms: the
/// credit average b_{nm}(s) and COMA's counterfactual b_m(s, a⁻ᵐ).
pub fn baseline_zero_mean(game: &ToyMatrixGame, policy: &TabularPolicy) -> Result<f64> {
    let sol = solve_tabular(game, policy)?;
    let (samples, _) = sampling_distribution(game, &sol);
    let n_agents = game.num_agents();
    let k = policy.num_params();
    let mut credit_means = vec![vec![0.0; k]; n_agents * n_agents];
    let mut coma_means = vec![vec![0.0; k]; n_agents];
    for smp in &samples {
        let acts = decode_joint_action(smp.joint, game.action_sizes());
        let coma = score_terms(Estimator::Coma, game, &sol, smp.t, smp.s, smp.joint);
        let q: f64 = (0..n_agents).map(|n| sol.joint_q[smp.t][n][smp.s][smp.joint]).sum();
        for m in 0..n_agents {
            let z = score_vector(policy, m, smp.s, acts[m]);
            let b_coma = q - coma[m].weight;
            for (acc, v) in coma_means[m].iter_mut().zip(&z) {
                *acc += smp.prob * b_coma * v;
            }
            for n in 0..n_agents {
                let b = sol.credit_baseline(smp.t, n, m, smp.s);
                for (acc, v) in credit_means[n * n_agents + m].iter_mut().zip(&z) {
                    *acc += smp.prob * b * v;
                }
            }
        }
    }
    Ok(credit_means
        .iter()
        .chain(&coma_means)
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Monte-Carlo mean and covariance trace from `samples` independent draws.
pub fn monte_carlo(
    game: &ToyMatrixGame,
    policy: &TabularPolicy,
    estimator: Estimator,
    samples: usize,
    rng: &mut dyn RngCore,
) -> Result<MonteCarloReport> {
    if samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let sol = solve_tabular(game, policy)?;
    let (support, normalizer) = sampling_distribution(game, &sol);
    let dist = WeightedIndex::new(support.iter().map(|s| s.prob))
        .map_err(|e| Error::InvalidArgument(format!("sampling distribution: {e}")))?;
    let draws: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let smp = &support[dist.sample(rng)];
            sample_gradient(estimator, game, policy, &sol, smp.t, smp.s, smp.joint)
        })
        .collect();
    let k = policy.num_params();
    let mut mean = vec![0.0; k];
    for g in &draws {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / samples as f64;
        }
    }
    let sq: Vec<f64> = draws
        .iter()
        .map(|g| g.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum())
        .collect();
    let n = samples as f64;
    let avg = sq.iter().sum::<f64>() / n;
    let variance = if samples > 1 { avg * n / (n - 1.0) } else { 0.0 };
    let spread = sq.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(MonteCarloReport {
        samples,
        normalizer,
        mean,
        variance,
        variance_se: (spread / n).sqrt(),
    })
}
