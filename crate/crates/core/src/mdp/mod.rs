//! Finite MDPs, stochastic policies and exact evaluation.
//!
//! Values and occupancies come from dense linear solves rather than iterative
//! sweeps, so every quantity downstream (returns, occupancies, bound terms) is
//! exact up to floating point.

mod empirical;
pub mod families;

pub use empirical::{empirical_mdp, CoverageMode, EmpiricalMdp, SampleAccumulator};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// A finite discounted MDP with rewards in `[0, 1]`.
///
/// Tables are stored row-major: `transition[(s * A + a) * S + s']` and
/// `reward[s * A + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

#[derive(Deserialize)]
struct MdpDocument {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        TabularMdp::new(
            doc.num_states,
            doc.num_actions,
            doc.transition,
            doc.reward,
            doc.discount,
            doc.initial_dist,
        )
    }
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidParameter(
                "an MDP needs at least one state and one action".into(),
            ));
        }
        let (s, a) = (num_states, num_actions);
        check_len("transition", s * a * s, transition.len())?;
        check_len("reward", s * a, reward.len())?;
        check_len("initial_dist", s, initial_dist.len())?;
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidParameter(format!(
                "discount {discount} must lie in [0, 1)"
            )));
        }
        for (row_idx, row) in transition.chunks(s).enumerate() {
            check_simplex("transition row", row, SUM_TOL).map_err(|e| match e {
                Error::InvalidDistribution { what, detail } => Error::InvalidDistribution {
                    what,
                    detail: format!("(s={}, a={}): {detail}", row_idx / a, row_idx % a),
                },
                other => other,
            })?;
        }
        check_simplex("initial_dist", &initial_dist, SUM_TOL)?;
        for (idx, &r) in reward.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::RewardOutOfRange {
                    state: idx / a,
                    action: idx % a,
                    value: r,
                });
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
            initial_dist,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// Next-state distribution `P(.|s, a)`.
    #[inline]
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    /// Horizon `1 / (1 - gamma)`.
    pub fn horizon(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    /// Same dynamics with a different reward table.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            reward,
            self.discount,
            self.initial_dist.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        check_len("policy states", self.num_states, policy.num_states)?;
        check_len("policy actions", self.num_actions, policy.num_actions)
    }
}

/// A stochastic policy `pi(a|s)` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_len("policy", num_states * num_actions, probs.len())?;
        for row in probs.chunks(num_actions) {
            check_simplex("policy row", row, SUM_TOL)?;
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    /// Convex combination `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &TabularPolicy, w: f64) -> Result<Self> {
        check_len("policy mix", self.probs.len(), other.probs.len())?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (1.0 - w) * p + w * q)
            .collect();
        Self::new(self.num_states, self.num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest absolute probability difference against `other`.
    pub fn max_abs_diff(&self, other: &TabularPolicy) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    /// Total variation distance between the action distributions at `s`.
    pub fn total_variation_at(&self, other: &TabularPolicy, s: usize) -> f64 {
        0.5 * self
            .row(s)
            .iter()
            .zip(other.row(s))
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }
}

/// Normalized discounted state-action visitation `d(s, a)`, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    num_states: usize,
    num_actions: usize,
    density: Vec<f64>,
}

impl OccupancyMeasure {
    /// Wraps an arbitrary nonnegative table that sums to one.
    pub fn from_density(num_states: usize, num_actions: usize, density: Vec<f64>) -> Result<Self> {
        check_len("occupancy", num_states * num_actions, density.len())?;
        check_simplex("occupancy", &density, 1e-9)?;
        Ok(Self {
            num_states,
            num_actions,
            density,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.density[s * self.num_actions + a]
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// State marginal `d(s) = sum_a d(s, a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.density
            .chunks(self.num_actions)
            .map(|row| row.iter().sum())
            .collect()
    }
}

/// Expected immediate reward and transition matrix under `policy`.
fn policy_dynamics(mdp: &TabularMdp, policy: &TabularPolicy) -> (DMatrix<f64>, DVector<f64>) {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut p_pi = DMatrix::zeros(ns, ns);
    let mut r_pi = DVector::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.reward(s, a);
            for (s2, &p) in mdp.next_dist(s, a).iter().enumerate() {
                p_pi[(s, s2)] += w * p;
            }
        }
    }
    (p_pi, r_pi)
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.lu().solve(&b).ok_or(Error::Singular)
}

/// State values of `policy` for a per-state reward vector `state_reward`.
///
/// `state_reward[s]` is the policy-weighted immediate reward at `s`; this is
/// the hook regularized objectives use to inject their penalty.
pub fn state_values_for(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    state_reward: &[f64],
) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    check_len("state reward", mdp.num_states, state_reward.len())?;
    let (p_pi, _) = policy_dynamics(mdp, policy);
    let n = mdp.num_states;
    let system = DMatrix::identity(n, n) - p_pi * mdp.discount;
    let v = solve(system, DVector::from_column_slice(state_reward))?;
    Ok(v.iter().copied().collect())
}

/// Exact `V^pi` from the linear Bellman system.
pub fn state_values(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let (p_pi, r_pi) = policy_dynamics(mdp, policy);
    let n = mdp.num_states;
    let system = DMatrix::identity(n, n) - p_pi * mdp.discount;
    let v = solve(system, r_pi)?;
    Ok(v.iter().copied().collect())
}

/// One-step lookahead `r(s, a) + gamma * sum_s' P(s'|s, a) V(s')`.
pub fn lookahead(mdp: &TabularMdp, values: &[f64]) -> Vec<f64> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let future: f64 = mdp
                .next_dist(s, a)
                .iter()
                .zip(values)
                .map(|(p, v)| p * v)
                .sum();
            q[s * na + a] = mdp.reward(s, a) + mdp.discount * future;
        }
    }
    q
}

/// Exact `Q^pi`, row-major over `(s, a)`.
pub fn q_values(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    let v = state_values(mdp, policy)?;
    Ok(lookahead(mdp, &v))
}

/// Expected discounted return `J(pi) = rho . V^pi`.
pub fn evaluate_return(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64> {
    let v = state_values(mdp, policy)?;
    Ok(dot(&mdp.initial_dist, &v))
}

/// Normalized discounted occupancy, solving
/// `d(s') = (1 - gamma) rho(s') + gamma sum_s d(s) P^pi(s'|s)`.
pub fn occupancy(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<OccupancyMeasure> {
    mdp.check_policy(policy)?;
    let (p_pi, _) = policy_dynamics(mdp, policy);
    let n = mdp.num_states;
    let system = DMatrix::identity(n, n) - p_pi.transpose() * mdp.discount;
    let source = DVector::from_column_slice(&mdp.initial_dist) * (1.0 - mdp.discount);
    let d_state = solve(system, source)?;
    let na = mdp.num_actions;
    let mut density = vec![0.0; n * na];
    for s in 0..n {
        // clamp roundoff negatives on unreachable states
        let ds = d_state[s].max(0.0);
        for a in 0..na {
            density[s * na + a] = ds * policy.prob(s, a);
        }
    }
    let total: f64 = density.iter().sum();
    density.iter_mut().for_each(|x| *x /= total);
    Ok(OccupancyMeasure {
        num_states: n,
        num_actions: na,
        density,
    })
}

/// Greedy policy over a Q table. Actions within a relative `1e-12` of the
/// maximum are considered tied and the lowest index wins.
pub fn greedy_policy(q: &[f64], num_states: usize, num_actions: usize) -> TabularPolicy {
    let actions: Vec<usize> = q
        .chunks(num_actions)
        .map(argmax_lowest)
        .collect();
    debug_assert_eq!(actions.len(), num_states);
    TabularPolicy::deterministic(num_actions, &actions)
}

pub(crate) fn argmax_lowest(row: &[f64]) -> usize {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * best.abs().max(1.0);
    row.iter()
        .position(|&x| x >= best - tol)
        .unwrap_or(0)
}

/// Optimal policy and its Q table by exact policy iteration.
///
/// Improvement keeps the lowest-index maximizer, and iteration stops once
/// the greedy policy is a fixed point.
pub fn optimal_policy(mdp: &TabularMdp) -> Result<(TabularPolicy, Vec<f64>)> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut policy = TabularPolicy::deterministic(na, &vec![0; ns]);
    // Policy iteration terminates in at most |A|^|S| steps; in practice a handful.
    for _ in 0..10_000 {
        let q = q_values(mdp, &policy)?;
        let next = greedy_policy(&q, ns, na);
        if next == policy {
            return Ok((policy, q));
        }
        policy = next;
    }
    let q = q_values(mdp, &policy)?;
    Ok((policy, q))
}

/// Divergence `sum_x p(x) (p(x) / q(x) - 1)`.
pub fn d_cql(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len("d_cql", p.len(), q.len())?;
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::SupportViolation { index });
        }
        total += pi * (pi / qi - 1.0);
    }
    Ok(total)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn check_simplex(what: &'static str, xs: &[f64], tol: f64) -> Result<()> {
    if let Some(bad) = xs.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidDistribution {
            what,
            detail: format!("entry {bad} is negative or not finite"),
        });
    }
    let sum: f64 = xs.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution {
            what,
            detail: format!("sums to {sum}"),
        });
    }
    Ok(())
}
