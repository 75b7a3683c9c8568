//! Exact evaluators for the safe-policy-improvement bound and its pieces:
//! reward bias (a), sampling error (b), policy improvement (c), plus the
//! reweighting objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, CoverageMode, EmpiricalMdp, TabularMdp, TabularPolicy};
use crate::relabel::{EffectiveDataset, Source};
use crate::solver::{self, Divergence, SolveResult};

/// Hoeffding constants with a union bound over all `(s, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConstants {
    pub c_r: f64,
    pub c_p: f64,
}

/// `C_r = range sqrt(ln(2|S||A|/delta) / 2)` and
/// `C_P = sqrt(2 (|S| ln 2 + ln(2|S||A|/delta)))`.
///
/// With probability at least `1 - delta`, simultaneously for all pairs,
/// `|r_hat - r| <= C_r / sqrt(n)` and `||P_hat - P||_1 <= C_P / sqrt(n)`.
pub fn concentration_constants(
    num_states: usize,
    num_actions: usize,
    delta: f64,
    reward_range: f64,
) -> Result<ConcentrationConstants> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1]")));
    }
    if num_states == 0 || num_actions == 0 || !(reward_range >= 0.0) {
        return Err(Error::InvalidParameter(
            "dimensions must be positive and the reward range nonnegative".into(),
        ));
    }
    let log_term = (2.0 * (num_states * num_actions) as f64 / delta).ln();
    Ok(ConcentrationConstants {
        c_r: reward_range * (log_term / 2.0).sqrt(),
        c_p: (2.0 * (num_states as f64 * std::f64::consts::LN_2 + log_term)).sqrt(),
    })
}

fn empirical(effective: &EffectiveDataset, discount: f64, initial_dist: &[f64]) -> Result<EmpiricalMdp> {
    effective.empirical(discount, initial_dist, CoverageMode::Lenient)
}

/// Reward error of the shared data: `(1 - f) (r - r_shared)` where
/// `r_shared` is the mean reward assigned to shared transitions at `(s, a)`.
///
/// Zero-reward sharing gives `(1 - f) r`; oracle labels give 0.
pub fn reward_error(effective: &EffectiveDataset, true_reward: &[f64]) -> Result<Vec<f64>> {
    let sa = effective.num_states() * effective.num_actions();
    mdp::check_len("true reward", sa, true_reward.len())?;
    let na = effective.num_actions();
    let mut w = vec![0.0; sa];
    let mut rw = vec![0.0; sa];
    for t in effective.transitions() {
        if t.source == Source::Shared && t.weight > 0.0 {
            let i = t.state * na + t.action;
            w[i] += t.weight;
            rw[i] += t.weight * t.assigned_reward;
        }
    }
    Ok((0..sa)
        .map(|i| {
            if w[i] > 0.0 {
                (1.0 - effective.f_table()[i]) * (true_reward[i] - rw[i] / w[i])
            } else {
                0.0
            }
        })
        .collect())
}

/// `r - r_phi` for a reward predictor.
pub fn predictor_reward_error(true_reward: &[f64], predictor: &[f64]) -> Result<Vec<f64>> {
    mdp::check_len("predictor", true_reward.len(), predictor.len())?;
    Ok(true_reward.iter().zip(predictor).map(|(r, p)| r - p).collect())
}

/// `1/(1-gamma) sum (d_hat^{beta} - d_hat^{pi}) dr`, occupancies taken on the
/// empirical MDP of `effective`.
pub fn reward_bias(
    effective: &EffectiveDataset,
    learned_policy: &TabularPolicy,
    reward_error: &[f64],
    discount: f64,
    initial_dist: &[f64],
) -> Result<f64> {
    let emp = empirical(effective, discount, initial_dist)?;
    mdp::check_len("reward error", emp.mdp.reward_table().len(), reward_error.len())?;
    let d_beta = mdp::occupancy(&emp.mdp, effective.behavior())?;
    let d_pi = mdp::occupancy(&emp.mdp, learned_policy)?;
    let gap: f64 = d_beta
        .density()
        .iter()
        .zip(d_pi.density())
        .zip(reward_error)
        .map(|((b, p), e)| (b - p) * e)
        .sum();
    Ok(gap / (1.0 - discount))
}

/// Term (a) for zero-reward sharing, `dr = (1 - f) r`, evaluated through
/// value functions instead of occupancies.
pub fn uds_term_a(
    effective: &EffectiveDataset,
    learned_policy: &TabularPolicy,
    true_reward: &[f64],
    discount: f64,
    initial_dist: &[f64],
) -> Result<f64> {
    let emp = empirical(effective, discount, initial_dist)?;
    let na = effective.num_actions();
    mdp::check_len("true reward", effective.num_states() * na, true_reward.len())?;
    let err: Vec<f64> = true_reward
        .iter()
        .zip(effective.f_table())
        .map(|(r, f)| (1.0 - f) * r)
        .collect();
    let value = |pi: &TabularPolicy| -> Result<f64> {
        let x: Vec<f64> = (0..effective.num_states())
            .map(|s| mdp::dot(pi.row(s), &err[s * na..(s + 1) * na]))
            .collect();
        let v = mdp::state_values_for(&emp.mdp, pi, &x)?;
        Ok(mdp::dot(initial_dist, &v))
    };
    Ok(value(effective.behavior())? - value(learned_policy)?)
}

/// Term (b):
/// `2 gamma C_P / (1-gamma)^2 * E_{s~d_hat^pi}[sqrt|A| / sqrt|D_eff(s)| * sqrt(D_CQL(s) + 1)]
///  + 2 C_r / (1-gamma) * E_{(s,a)~d_hat^pi}[f(s,a) / sqrt|D_L(s,a)|]`.
///
/// Pairs without labeled data contribute nothing to the reward part.
pub fn sampling_error_bound(
    effective: &EffectiveDataset,
    learned_policy: &TabularPolicy,
    constants: &ConcentrationConstants,
    discount: f64,
    initial_dist: &[f64],
) -> Result<f64> {
    let emp = empirical(effective, discount, initial_dist)?;
    let d_pi = mdp::occupancy(&emp.mdp, learned_policy)?;
    let d_s = d_pi.state_marginal();
    let n_s = effective.state_counts();
    let div = solver::state_divergence(learned_policy, effective.behavior(), Divergence::Cql);
    let na = effective.num_actions();
    let sqrt_a = (na as f64).sqrt();
    let mut transition_part = 0.0;
    for s in 0..effective.num_states() {
        if d_s[s] <= 0.0 {
            continue;
        }
        if n_s[s] <= 0.0 {
            return Err(Error::UncoveredState { state: s });
        }
        if !div[s].is_finite() {
            let a = (0..na)
                .find(|&a| learned_policy.prob(s, a) > 0.0 && effective.behavior().prob(s, a) == 0.0)
                .unwrap_or(0);
            return Err(Error::SupportViolation { index: s * na + a });
        }
        transition_part += d_s[s] * sqrt_a / n_s[s].sqrt() * (div[s] + 1.0).sqrt();
    }
    let mut reward_part = 0.0;
    for (i, &d) in d_pi.density().iter().enumerate() {
        let n_l = effective.labeled_counts()[i];
        if d > 0.0 && n_l > 0 {
            reward_part += d * effective.f_table()[i] / (n_l as f64).sqrt();
        }
    }
    let h = 1.0 / (1.0 - discount);
    Ok(2.0 * discount * constants.c_p * h * h * transition_part
        + 2.0 * constants.c_r * h * reward_part)
}

/// Every term of the safe-policy-improvement inequality for one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub term_a_reward_bias: f64,
    pub term_b_sampling_error: f64,
    pub term_c_policy_improvement: f64,
    pub zeta_err: f64,
    pub j_true_learned: f64,
    pub j_true_behavior: f64,
    pub j_empirical_learned: f64,
    pub guarantee_holds: bool,
    pub delta: f64,
    pub c_r: f64,
    pub c_p: f64,
}

impl BoundReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Header and values for a flat CSV row.
    pub fn csv_row(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

/// Assembles terms (a)-(c) and checks
/// `J(pi*) >= J(pi_beta_eff) - zeta_err + (c)` on the true MDP.
pub fn theorem1_report(
    mdp: &TabularMdp,
    effective: &EffectiveDataset,
    result: &SolveResult,
    delta: f64,
    alpha: f64,
) -> Result<BoundReport> {
    let gamma = mdp.discount();
    let rho = mdp.initial_dist();
    let constants = concentration_constants(mdp.num_states(), mdp.num_actions(), delta, 1.0)?;
    let err = reward_error(effective, mdp.reward_table())?;
    let term_a = reward_bias(effective, &result.policy, &err, gamma, rho)?;
    let term_b = sampling_error_bound(effective, &result.policy, &constants, gamma, rho)?;
    let term_c = alpha / (1.0 - gamma) * result.divergence_value;
    let zeta = term_a + term_b;
    let j_learned = mdp::evaluate_return(mdp, &result.policy)?;
    let j_behavior = mdp::evaluate_return(mdp, effective.behavior())?;
    Ok(BoundReport {
        term_a_reward_bias: term_a,
        term_b_sampling_error: term_b,
        term_c_policy_improvement: term_c,
        zeta_err: zeta,
        j_true_learned: j_learned,
        j_true_behavior: j_behavior,
        j_empirical_learned: result.empirical_return,
        guarantee_holds: j_learned >= j_behavior - zeta + term_c,
        delta,
        c_r: constants.c_r,
        c_p: constants.c_p,
    })
}

/// Reward-bias objective as a function of the effective behavior
/// distribution `p`:
/// `sum p r / (1-gamma) + 1/((1-gamma)|D_eff|) sum |D_L(s,a)| r (d_pi / p - 1)`.
///
/// Returns `+inf` where `p = 0` but `d_pi > 0`.
pub fn reward_bias_objective(
    p: &[f64],
    d_pi: &[f64],
    labeled_counts: &[f64],
    effective_size: f64,
    reward: &[f64],
    discount: f64,
) -> Result<f64> {
    mdp::check_len("d_pi", p.len(), d_pi.len())?;
    mdp::check_len("labeled counts", p.len(), labeled_counts.len())?;
    mdp::check_len("reward", p.len(), reward.len())?;
    if !(effective_size > 0.0) {
        return Err(Error::InvalidParameter("effective size must be positive".into()));
    }
    let h = 1.0 / (1.0 - discount);
    let mut base = 0.0;
    let mut bias = 0.0;
    for i in 0..p.len() {
        base += p[i] * reward[i];
        if labeled_counts[i] == 0.0 || reward[i] == 0.0 {
            continue;
        }
        if p[i] <= 0.0 {
            if d_pi[i] > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        bias += labeled_counts[i] * reward[i] * (d_pi[i] / p[i] - 1.0);
    }
    Ok(h * base + h / effective_size * bias)
}

/// `C1 = gamma C_P / ((1-gamma)^2 sqrt|D_eff|)`, `C2 = |D_L| / ((1-gamma)|D_eff|)`.
pub fn theorem3_constants(
    labeled_size: f64,
    effective_size: f64,
    c_p: f64,
    discount: f64,
) -> Result<(f64, f64)> {
    if !(labeled_size > 0.0 && effective_size > 0.0) {
        return Err(Error::InvalidParameter("dataset sizes must be positive".into()));
    }
    let h = 1.0 / (1.0 - discount);
    Ok((
        discount * c_p * h * h / effective_size.sqrt(),
        labeled_size * h / effective_size,
    ))
}
