use serde::{Deserialize, Serialize};

use super::{check_len, TabularMdp};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// How pairs without data are handled when building an empirical MDP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// Every `(s, a)` must be observed.
    #[default]
    Strict,
    /// Unobserved pairs get a self-loop with reward 0 and are reported.
    Lenient,
}

/// An empirical MDP together with the pairs that had to be filled in.
#[derive(Debug, Clone)]
pub struct EmpiricalMdp {
    pub mdp: TabularMdp,
    pub uncovered: Vec<(usize, usize)>,
}

/// Weighted sufficient statistics of a transition multiset.
#[derive(Debug, Clone)]
pub struct SampleAccumulator {
    num_states: usize,
    num_actions: usize,
    weight: Vec<f64>,
    reward_weight: Vec<f64>,
    reward_sum: Vec<f64>,
    next: Vec<f64>,
}

impl SampleAccumulator {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let sa = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            weight: vec![0.0; sa],
            reward_weight: vec![0.0; sa],
            reward_sum: vec![0.0; sa],
            next: vec![0.0; sa * num_states],
        }
    }

    /// Records one transition. Unlabeled samples (`reward = None`) inform the
    /// dynamics only.
    pub fn add(&mut self, s: usize, a: usize, next: usize, reward: Option<f64>, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        let sa = s * self.num_actions + a;
        self.weight[sa] += weight;
        self.next[sa * self.num_states + next] += weight;
        if let Some(r) = reward {
            self.reward_weight[sa] += weight;
            self.reward_sum[sa] += weight * r;
        }
    }

    pub fn weight(&self, s: usize, a: usize) -> f64 {
        self.weight[s * self.num_actions + a]
    }

    pub fn build(
        &self,
        discount: f64,
        initial_dist: &[f64],
        mode: CoverageMode,
    ) -> Result<EmpiricalMdp> {
        let (ns, na) = (self.num_states, self.num_actions);
        check_len("initial_dist", ns, initial_dist.len())?;
        let uncovered: Vec<(usize, usize)> = (0..ns * na)
            .filter(|&sa| self.weight[sa] <= 0.0)
            .map(|sa| (sa / na, sa % na))
            .collect();
        if mode == CoverageMode::Strict && !uncovered.is_empty() {
            return Err(Error::CoverageViolation { missing: uncovered });
        }
        let mut transition = vec![0.0; ns * na * ns];
        let mut reward = vec![0.0; ns * na];
        for sa in 0..ns * na {
            let row = &mut transition[sa * ns..(sa + 1) * ns];
            let w = self.weight[sa];
            if w <= 0.0 {
                row[sa / na] = 1.0;
                continue;
            }
            for (dst, &c) in row.iter_mut().zip(&self.next[sa * ns..(sa + 1) * ns]) {
                *dst = c / w;
            }
            if self.reward_weight[sa] > 0.0 {
                reward[sa] = (self.reward_sum[sa] / self.reward_weight[sa]).clamp(0.0, 1.0);
            }
        }
        let mdp = TabularMdp::new(ns, na, transition, reward, discount, initial_dist.to_vec())?;
        Ok(EmpiricalMdp { mdp, uncovered })
    }
}

/// Maximum-likelihood MDP of a dataset: `P(s'|s,a) = n(s,a,s') / n(s,a)` and
/// `r(s,a)` the mean observed reward (0 where no labeled sample exists).
pub fn empirical_mdp(
    dataset: &Dataset,
    discount: f64,
    initial_dist: &[f64],
    mode: CoverageMode,
) -> Result<EmpiricalMdp> {
    let mut acc = SampleAccumulator::new(dataset.num_states(), dataset.num_actions());
    for t in dataset.transitions() {
        acc.add(t.state, t.action, t.next_state, t.reward, 1.0);
    }
    acc.build(discount, initial_dist, mode)
}
