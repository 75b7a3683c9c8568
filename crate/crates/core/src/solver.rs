//! Conservative offline RL on the empirical MDP:
//! `max_pi J_hat(pi) - alpha / (1 - gamma) * E_{s ~ d_hat^pi} D(pi, pi_beta)(s)`.
//!
//! Solved by regularized policy iteration. Evaluation folds the per-state
//! divergence into the reward; improvement solves the one-step regularized
//! problem exactly in every state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, CoverageMode, TabularMdp, TabularPolicy};
use crate::relabel::EffectiveDataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    /// `sum_a pi (pi / pi_beta - 1)`.
    #[default]
    Cql,
    /// `sum_a pi ln(pi / pi_beta)`.
    Kl,
}

/// Conservatism settings. Ties always go to the lowest action index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConservativeConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub divergence: Divergence,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_max_iters() -> usize {
    1000
}
fn default_tol() -> f64 {
    1e-10
}

impl Default for ConservativeConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            divergence: Divergence::default(),
            max_iters: default_max_iters(),
            tol: default_tol(),
        }
    }
}

impl ConservativeConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha {} must be >= 0", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol {} must be > 0", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub policy: TabularPolicy,
    /// Plain `Q^pi` of the returned policy on the empirical MDP.
    pub q_values: Vec<f64>,
    /// `Q^pi` under the modified (penalized) reward.
    pub conservative_q: Vec<f64>,
    /// `J_hat(pi)` on the empirical MDP.
    pub empirical_return: f64,
    /// `E_{s ~ d_hat^pi} D(pi, pi_beta)(s)`.
    pub divergence_value: f64,
    /// Regularized objective of the returned policy.
    pub objective: f64,
    /// Regularized objective after every evaluation, starting from `pi_beta`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Pairs without data, filled in by the lenient empirical MDP.
    pub uncovered: Vec<(usize, usize)>,
}

/// Per-state divergence `D(pi, pi_beta)(s)`; `+inf` off the behavior support.
pub fn state_divergence(
    policy: &TabularPolicy,
    behavior: &TabularPolicy,
    divergence: Divergence,
) -> Vec<f64> {
    (0..policy.num_states())
        .map(|s| {
            let mut total = 0.0;
            for (&p, &b) in policy.row(s).iter().zip(behavior.row(s)) {
                if p == 0.0 {
                    continue;
                }
                if b <= 0.0 {
                    return f64::INFINITY;
                }
                total += match divergence {
                    Divergence::Cql => p * (p / b - 1.0),
                    Divergence::Kl => p * (p / b).ln(),
                };
            }
            total
        })
        .collect()
}

fn check_support(policy: &TabularPolicy, behavior: &TabularPolicy) -> Result<()> {
    match policy
        .probs()
        .iter()
        .zip(behavior.probs())
        .position(|(&p, &b)| p > 0.0 && b <= 0.0)
    {
        Some(index) => Err(Error::SupportViolation { index }),
        None => Ok(()),
    }
}

/// State values of the regularized objective, `V = sum_a pi r - alpha D(s) + gamma P^pi V`.
fn regularized_values(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    policy: &TabularPolicy,
    alpha: f64,
    divergence: Divergence,
) -> Result<Vec<f64>> {
    let na = mdp.num_actions();
    let div = if alpha > 0.0 {
        check_support(policy, behavior)?;
        state_divergence(policy, behavior, divergence)
    } else {
        vec![0.0; mdp.num_states()]
    };
    let state_reward: Vec<f64> = (0..mdp.num_states())
        .map(|s| {
            let r = mdp::dot(policy.row(s), &mdp.reward_table()[s * na..(s + 1) * na]);
            r - alpha * div[s]
        })
        .collect();
    mdp::state_values_for(mdp, policy, &state_reward)
}

/// `J_hat(pi) - alpha / (1 - gamma) E_{d_hat^pi} D(pi, pi_beta)`, computed as
/// `rho . V` of the penalized state reward.
pub fn regularized_objective(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    policy: &TabularPolicy,
    alpha: f64,
    divergence: Divergence,
) -> Result<f64> {
    let v = regularized_values(mdp, behavior, policy, alpha, divergence)?;
    Ok(mdp::dot(mdp.initial_dist(), &v))
}

/// Maximizes `sum_a pi(a) q(a) - alpha D(pi, beta)` over the simplex.
fn improve_state(q: &[f64], beta: &[f64], alpha: f64, divergence: Divergence, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    if alpha == 0.0 {
        out[mdp::argmax_lowest(q)] = 1.0;
        return;
    }
    let support: Vec<usize> = (0..q.len()).filter(|&a| beta[a] > 0.0).collect();
    match divergence {
        Divergence::Kl => {
            let m = support.iter().map(|&a| q[a] / alpha).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &a in &support {
                out[a] = beta[a] * (q[a] / alpha - m).exp();
                z += out[a];
            }
            out.iter_mut().for_each(|x| *x /= z);
        }
        Divergence::Cql => {
            // pi(a) = beta(a) (q(a) - lambda)_+ / (2 alpha); grow the active set
            // in decreasing q (stable, so ties keep index order) until the
            // next action would get negative mass.
            let mut order = support;
            order.sort_by(|&a, &b| q[b].total_cmp(&q[a]));
            let (mut bq, mut b) = (0.0, 0.0);
            let mut lambda = 0.0;
            let mut active = 0;
            for (k, &a) in order.iter().enumerate() {
                let cand = (bq + beta[a] * q[a] - 2.0 * alpha) / (b + beta[a]);
                if k > 0 && q[a] <= cand {
                    break;
                }
                bq += beta[a] * q[a];
                b += beta[a];
                lambda = cand;
                active = k + 1;
            }
            let mut z = 0.0;
            for &a in &order[..active] {
                out[a] = (beta[a] * (q[a] - lambda) / (2.0 * alpha)).max(0.0);
                z += out[a];
            }
            out.iter_mut().for_each(|x| *x /= z);
        }
    }
}

/// Regularized policy iteration on a given MDP and behavior policy.
///
/// Starts from `behavior` (from the greedy policy of `Q^beta` when
/// `alpha = 0`) and stops when successive policies differ by less than
/// `config.tol` in every entry.
pub fn solve_on(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    config: &ConservativeConfig,
) -> Result<SolveResult> {
    config.validate()?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let alpha = config.alpha;
    let mut policy = behavior.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut next = vec![0.0; ns * na];
    while iterations < config.max_iters {
        let v = regularized_values(mdp, behavior, &policy, alpha, config.divergence)?;
        trace.push(mdp::dot(mdp.initial_dist(), &v));
        let q = mdp::lookahead(mdp, &v);
        for s in 0..ns {
            improve_state(
                &q[s * na..(s + 1) * na],
                behavior.row(s),
                alpha,
                config.divergence,
                &mut next[s * na..(s + 1) * na],
            );
        }
        let candidate = TabularPolicy::new(ns, na, next.clone())?;
        iterations += 1;
        let change = candidate.max_abs_diff(&policy);
        policy = candidate;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let objective = regularized_objective(mdp, behavior, &policy, alpha, config.divergence)?;
    trace.push(objective);
    let q_values = mdp::q_values(mdp, &policy)?;
    let conservative_q = conservative_q_on(mdp, behavior, &policy, alpha, config.divergence)?;
    let empirical_return = mdp::evaluate_return(mdp, &policy)?;
    let divergence_value = expected_divergence(mdp, behavior, &policy, config.divergence)?;
    Ok(SolveResult {
        policy,
        q_values,
        conservative_q,
        empirical_return,
        divergence_value,
        objective,
        objective_trace: trace,
        iterations,
        converged,
        uncovered: Vec::new(),
    })
}

/// `E_{s ~ d^pi} D(pi, beta)(s)` on `mdp`.
pub fn expected_divergence(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    policy: &TabularPolicy,
    divergence: Divergence,
) -> Result<f64> {
    check_support(policy, behavior)?;
    let d = mdp::occupancy(mdp, policy)?.state_marginal();
    let div = state_divergence(policy, behavior, divergence);
    Ok(d.iter().zip(&div).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x).sum())
}

/// Builds the lenient empirical MDP of `effective` and solves on it against
/// the effective behavior policy.
pub fn solve_conservative(
    effective: &EffectiveDataset,
    config: &ConservativeConfig,
    discount: f64,
    initial_dist: &[f64],
) -> Result<SolveResult> {
    let emp = effective.empirical(discount, initial_dist, CoverageMode::Lenient)?;
    let mut result = solve_on(&emp.mdp, effective.behavior(), config)?;
    result.uncovered = emp.uncovered;
    Ok(result)
}

fn conservative_q_on(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    policy: &TabularPolicy,
    alpha: f64,
    divergence: Divergence,
) -> Result<Vec<f64>> {
    let v = regularized_values(mdp, behavior, policy, alpha, divergence)?;
    let mut q = mdp::lookahead(mdp, &v);
    if alpha > 0.0 {
        for (i, qi) in q.iter_mut().enumerate() {
            let (p, b) = (policy.probs()[i], behavior.probs()[i]);
            // no data and no mass: neither penalty nor bonus
            if b <= 0.0 {
                continue;
            }
            *qi -= alpha
                * match divergence {
                    Divergence::Cql => p / b - 1.0,
                    Divergence::Kl if p > 0.0 => (p / b).ln(),
                    Divergence::Kl => 0.0,
                };
        }
    }
    Ok(q)
}

/// Conservative Q-values of `policy` on the empirical MDP of `effective`:
/// the per-action reward is `r_eff(s, a) - alpha (pi / pi_beta - 1)`, whose
/// `pi`-average is the penalized state reward, so `sum_a pi Q = V`.
pub fn conservative_q(
    effective: &EffectiveDataset,
    policy: &TabularPolicy,
    alpha: f64,
    discount: f64,
    initial_dist: &[f64],
) -> Result<Vec<f64>> {
    let emp = effective.empirical(discount, initial_dist, CoverageMode::Lenient)?;
    conservative_q_on(&emp.mdp, effective.behavior(), policy, alpha, Divergence::Cql)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::families;

    #[test]
    fn cql_improvement_matches_kkt() {
        let q = [1.0, 0.5, 0.9, -3.0];
        let beta = [0.25, 0.25, 0.25, 0.25];
        let mut out = [0.0; 4];
        improve_state(&q, &beta, 0.1, Divergence::Cql, &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(out[3], 0.0);
        // on the support, q - 2 alpha pi / beta is constant
        let lam: Vec<f64> = (0..3)
            .filter(|&a| out[a] > 0.0)
            .map(|a| q[a] - 2.0 * 0.1 * out[a] / beta[a])
            .collect();
        for l in &lam {
            assert!((l - lam[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_alpha_returns_behavior() {
        let mdp = families::random_dense(5, 3, 0.9, 3);
        let beta = TabularPolicy::new(5, 3, [0.2, 0.3, 0.5].repeat(5)).unwrap();
        let res = solve_on(&mdp, &beta, &ConservativeConfig::with_alpha(1e4)).unwrap();
        assert!(res.converged);
        for s in 0..5 {
            assert!(res.policy.total_variation_at(&beta, s) < 1e-3);
        }
    }

    #[test]
    fn zero_alpha_is_optimal() {
        let mdp = families::random_dense(6, 3, 0.9, 11);
        let res = solve_on(&mdp, &TabularPolicy::uniform(6, 3), &ConservativeConfig::with_alpha(0.0)).unwrap();
        let (opt, _) = mdp::optimal_policy(&mdp).unwrap();
        let j = mdp::evaluate_return(&mdp, &opt).unwrap();
        assert!((res.empirical_return - j).abs() < 1e-10);
        assert!(res.converged);
    }

    #[test]
    fn objective_trace_is_monotone() {
        for seed in 0..5 {
            let mdp = families::random_dense(6, 3, 0.95, seed);
            let beta = TabularPolicy::new(6, 3, [0.6, 0.3, 0.1].repeat(6)).unwrap();
            for div in [Divergence::Cql, Divergence::Kl] {
                let cfg = ConservativeConfig {
                    divergence: div,
                    ..ConservativeConfig::with_alpha(0.3)
                };
                let res = solve_on(&mdp, &beta, &cfg).unwrap();
                for w in res.objective_trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-10, "{w:?}");
                }
            }
        }
    }

    #[test]
    fn behavior_support_is_respected() {
        let mdp = families::random_dense(4, 3, 0.9, 5);
        let beta = TabularPolicy::new(4, 3, [0.5, 0.5, 0.0].repeat(4)).unwrap();
        let res = solve_on(&mdp, &beta, &ConservativeConfig::with_alpha(0.01)).unwrap();
        for s in 0..4 {
            assert_eq!(res.policy.prob(s, 2), 0.0);
        }
        let v = regularized_values(&mdp, &beta, &res.policy, 0.01, Divergence::Cql).unwrap();
        for s in 0..4 {
            let avg = mdp::dot(res.policy.row(s), &res.conservative_q[s * 3..s * 3 + 3]);
            assert!((avg - v[s]).abs() < 1e-9);
        }
        let bad = TabularPolicy::uniform(4, 3);
        assert!(regularized_objective(&mdp, &beta, &bad, 1.0, Divergence::Cql).is_err());
    }
}
