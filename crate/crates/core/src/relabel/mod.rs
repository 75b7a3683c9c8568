//! Data-sharing strategies that turn labeled and unlabeled data into the
//! effective dataset an offline RL algorithm trains on.
//!
//! Every strategy funnels through [`EffectiveDataset::from_parts`], which
//! derives the labeled fraction `f(s, a)`, the effective reward table and the
//! effective behavior policy from the weighted transition multiset.

mod cds;
mod reweight;

pub use cds::{cds_weights, percentile, CdsWeights, WeightMode};
pub use reweight::{
    closed_form_bias_minimizer, kkt_residual, optimal_reweight, reweight_gradient, reweight_objective,
    ReweightSolution,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Transition};
use crate::error::{Error, Result};
use crate::mdp::{self, CoverageMode, EmpiricalMdp, OccupancyMeasure, SampleAccumulator, TabularMdp, TabularPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Labeled,
    Shared,
}

/// A transition as it enters training: assigned reward and sharing weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTransition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    /// Reward recorded in the source data, if any.
    pub observed_reward: Option<f64>,
    pub task_id: Option<usize>,
    pub weight: f64,
    pub assigned_reward: f64,
    pub source: Source,
}

/// Merged labeled and shared data with its derived tables.
#[derive(Debug, Clone)]
pub struct EffectiveDataset {
    num_states: usize,
    num_actions: usize,
    kind: StrategyKind,
    transitions: Vec<EffectiveTransition>,
    f_table: Vec<f64>,
    r_eff_table: Vec<f64>,
    behavior: TabularPolicy,
    counts_eff: Vec<usize>,
    weighted_counts: Vec<f64>,
    labeled_counts: Vec<usize>,
    labeled_reward: Vec<f64>,
}

impl EffectiveDataset {
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        kind: StrategyKind,
        transitions: Vec<EffectiveTransition>,
    ) -> Result<Self> {
        let (ns, na) = (num_states, num_actions);
        let sa = ns * na;
        let mut total_w = vec![0.0; sa];
        let mut labeled_w = vec![0.0; sa];
        let mut reward_w = vec![0.0; sa];
        let mut counts_eff = vec![0usize; sa];
        let mut labeled_counts = vec![0usize; sa];
        let mut labeled_sum = vec![0.0; sa];
        for t in &transitions {
            if t.state >= ns || t.next_state >= ns || t.action >= na {
                return Err(Error::DimensionMismatch {
                    what: "effective transition",
                    expected: sa,
                    found: t.state * na + t.action,
                });
            }
            if !(0.0..=1.0).contains(&t.weight) || !(0.0..=1.0).contains(&t.assigned_reward) {
                return Err(Error::InvalidParameter(format!(
                    "weight {} and assigned reward {} must lie in [0, 1]",
                    t.weight, t.assigned_reward
                )));
            }
            let i = t.state * na + t.action;
            if t.source == Source::Labeled {
                labeled_counts[i] += 1;
                labeled_sum[i] += t.observed_reward.unwrap_or(t.assigned_reward);
            }
            if t.weight <= 0.0 {
                continue;
            }
            counts_eff[i] += 1;
            total_w[i] += t.weight;
            reward_w[i] += t.weight * t.assigned_reward;
            if t.source == Source::Labeled {
                labeled_w[i] += t.weight;
            }
        }
        let f_table = (0..sa)
            .map(|i| if total_w[i] > 0.0 { labeled_w[i] / total_w[i] } else { 1.0 })
            .collect();
        let r_eff_table = (0..sa)
            .map(|i| if total_w[i] > 0.0 { (reward_w[i] / total_w[i]).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        let labeled_reward = (0..sa)
            .map(|i| if labeled_counts[i] > 0 { labeled_sum[i] / labeled_counts[i] as f64 } else { 0.0 })
            .collect();
        let mut probs = vec![0.0; sa];
        for s in 0..ns {
            let row = &total_w[s * na..(s + 1) * na];
            let z: f64 = row.iter().sum();
            for a in 0..na {
                probs[s * na + a] = if z > 0.0 { row[a] / z } else { 1.0 / na as f64 };
            }
        }
        let behavior = TabularPolicy::new(ns, na, probs)?;
        Ok(Self {
            num_states,
            num_actions,
            kind,
            transitions,
            f_table,
            r_eff_table,
            behavior,
            counts_eff,
            weighted_counts: total_w,
            labeled_counts,
            labeled_reward,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn transitions(&self) -> &[EffectiveTransition] {
        &self.transitions
    }

    /// Labeled fraction `f(s, a)`; 1 where the pair has no data.
    pub fn f_table(&self) -> &[f64] {
        &self.f_table
    }

    pub fn f(&self, s: usize, a: usize) -> f64 {
        self.f_table[s * self.num_actions + a]
    }

    /// Weighted mean assigned reward per pair.
    pub fn r_eff_table(&self) -> &[f64] {
        &self.r_eff_table
    }

    /// Effective behavior policy `|D_eff(s, a)| / |D_eff(s)|`, uniform on
    /// states without data.
    pub fn behavior(&self) -> &TabularPolicy {
        &self.behavior
    }

    /// Number of transitions with positive weight per pair.
    pub fn counts_eff(&self) -> &[usize] {
        &self.counts_eff
    }

    /// Total sharing weight per pair (equals `counts_eff` for unit weights).
    pub fn weighted_counts(&self) -> &[f64] {
        &self.weighted_counts
    }

    /// Weighted `|D_eff(s)|`.
    pub fn state_counts(&self) -> Vec<f64> {
        self.weighted_counts
            .chunks(self.num_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Weighted `|D_eff|`.
    pub fn total_weight(&self) -> f64 {
        self.weighted_counts.iter().sum()
    }

    /// `|D_L(s, a)|`.
    pub fn labeled_counts(&self) -> &[usize] {
        &self.labeled_counts
    }

    pub fn labeled_size(&self) -> usize {
        self.labeled_counts.iter().sum()
    }

    /// Mean observed labeled reward per pair (0 where unlabeled).
    pub fn labeled_reward(&self) -> &[f64] {
        &self.labeled_reward
    }

    /// Empirical MDP of the weighted data with assigned rewards.
    pub fn empirical(
        &self,
        discount: f64,
        initial_dist: &[f64],
        mode: CoverageMode,
    ) -> Result<EmpiricalMdp> {
        let mut acc = SampleAccumulator::new(self.num_states, self.num_actions);
        for t in &self.transitions {
            acc.add(t.state, t.action, t.next_state, Some(t.assigned_reward), t.weight);
        }
        acc.build(discount, initial_dist, mode)
    }

    /// Dataset CSV schema plus `weight` and `assigned_reward` columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            state: usize,
            action: usize,
            next_state: usize,
            reward: Option<f64>,
            task_id: Option<usize>,
            weight: f64,
            assigned_reward: f64,
        }
        let mut w = csv::Writer::from_writer(writer);
        for t in &self.transitions {
            w.serialize(Row {
                state: t.state,
                action: t.action,
                next_state: t.next_state,
                reward: t.observed_reward,
                task_id: t.task_id,
                weight: t.weight,
                assigned_reward: t.assigned_reward,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    NoSharing,
    SharingAll,
    Uds,
    RewardPredictor,
    CdsFilter,
    CdsSoft,
    CdsUds,
    OptimalReweight,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        StrategyKind::NoSharing,
        StrategyKind::SharingAll,
        StrategyKind::Uds,
        StrategyKind::RewardPredictor,
        StrategyKind::CdsFilter,
        StrategyKind::CdsSoft,
        StrategyKind::CdsUds,
        StrategyKind::OptimalReweight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::NoSharing => "no_sharing",
            StrategyKind::SharingAll => "sharing_all",
            StrategyKind::Uds => "uds",
            StrategyKind::RewardPredictor => "reward_predictor",
            StrategyKind::CdsFilter => "cds_filter",
            StrategyKind::CdsSoft => "cds_soft",
            StrategyKind::CdsUds => "cds_uds",
            StrategyKind::OptimalReweight => "optimal_reweight",
        }
    }

    /// Whether the strategy needs conservative Q-values of the labeled data.
    pub fn needs_conservative_q(self) -> bool {
        matches!(
            self,
            StrategyKind::CdsFilter | StrategyKind::CdsSoft | StrategyKind::CdsUds
        )
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A sharing strategy with its tuning knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default = "default_k")]
    pub k_percentile: f64,
    #[serde(default = "default_decay")]
    pub temperature_decay: f64,
    /// `[min, max]`; a `null` max means unbounded.
    #[serde(default = "default_clip")]
    pub temperature_clip: (f64, Option<f64>),
    #[serde(default = "default_smoothing")]
    pub predictor_smoothing: f64,
    /// Candidate transitions per running-average update of the temperature.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Filter used by `cds_uds`.
    #[serde(default = "default_cds_mode")]
    pub cds_mode: WeightMode,
}

fn default_cds_mode() -> WeightMode {
    WeightMode::Soft
}

fn default_k() -> f64 {
    50.0
}
fn default_decay() -> f64 {
    0.995
}
fn default_clip() -> (f64, Option<f64>) {
    (1.0, None)
}
fn default_smoothing() -> f64 {
    1.0
}
fn default_batch() -> usize {
    256
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            k_percentile: default_k(),
            temperature_decay: default_decay(),
            temperature_clip: default_clip(),
            predictor_smoothing: default_smoothing(),
            batch_size: default_batch(),
            cds_mode: default_cds_mode(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.k_percentile) {
            return Err(Error::InvalidParameter(format!(
                "k_percentile {} outside [0, 100]",
                self.k_percentile
            )));
        }
        if !(self.temperature_decay > 0.0 && self.temperature_decay <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature_decay {} outside (0, 1]",
                self.temperature_decay
            )));
        }
        let (lo, hi) = self.temperature_clip;
        if lo < 0.0 || hi.is_some_and(|h| h < lo) {
            return Err(Error::InvalidParameter(format!(
                "temperature_clip [{lo}, {hi:?}] is not an interval of nonnegative reals"
            )));
        }
        if self.predictor_smoothing < 0.0 {
            return Err(Error::InvalidParameter("predictor_smoothing must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inputs some strategies need beyond the two datasets.
#[derive(Debug, Clone, Default)]
pub struct StrategyContext<'a> {
    /// True MDP, for oracle-labeled strategies.
    pub oracle: Option<&'a TabularMdp>,
    /// Conservative Q-values the CDS rule ranks transitions by.
    pub conservative_q: Option<&'a [f64]>,
    /// Pre-fitted reward predictor; fitted from the labeled data if absent.
    pub predictor: Option<&'a [f64]>,
    /// Learned-policy occupancy and constants for the optimized reweighting.
    pub reweight: Option<ReweightContext<'a>>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReweightContext<'a> {
    pub d_pi: &'a OccupancyMeasure,
    pub c1: f64,
    pub c2: f64,
}

fn check_pair(labeled: &Dataset, unlabeled: &Dataset) -> Result<()> {
    mdp::check_len("unlabeled states", labeled.num_states(), unlabeled.num_states())?;
    mdp::check_len("unlabeled actions", labeled.num_actions(), unlabeled.num_actions())?;
    if let Some(index) = labeled.transitions().iter().position(|t| t.reward.is_none()) {
        return Err(Error::UnlabeledInLabeled { index });
    }
    if let Some(index) = unlabeled.transitions().iter().position(|t| t.reward.is_some()) {
        return Err(Error::LabeledInUnlabeled { index });
    }
    Ok(())
}

fn labeled_part(labeled: &Dataset) -> impl Iterator<Item = EffectiveTransition> + '_ {
    labeled.transitions().iter().map(|t| EffectiveTransition {
        state: t.state,
        action: t.action,
        next_state: t.next_state,
        observed_reward: t.reward,
        task_id: t.task_id,
        weight: 1.0,
        assigned_reward: t.reward.unwrap_or(0.0),
        source: Source::Labeled,
    })
}

fn shared(t: &Transition, reward: f64, weight: f64) -> EffectiveTransition {
    EffectiveTransition {
        state: t.state,
        action: t.action,
        next_state: t.next_state,
        observed_reward: t.reward,
        task_id: t.task_id,
        weight,
        assigned_reward: reward,
        source: Source::Shared,
    }
}

/// Labeled data plus unlabeled data relabeled by `assign` and weighted by
/// `weights` (unit weights when `None`).
fn share_with(
    kind: StrategyKind,
    labeled: &Dataset,
    unlabeled: &Dataset,
    assign: impl Fn(&Transition) -> f64,
    weights: Option<&[f64]>,
) -> Result<EffectiveDataset> {
    check_pair(labeled, unlabeled)?;
    if let Some(w) = weights {
        mdp::check_len("sharing weights", unlabeled.len(), w.len())?;
    }
    let mut transitions: Vec<EffectiveTransition> = labeled_part(labeled).collect();
    transitions.extend(
        unlabeled
            .transitions()
            .iter()
            .enumerate()
            .map(|(i, t)| shared(t, assign(t), weights.map_or(1.0, |w| w[i]))),
    );
    EffectiveDataset::from_parts(labeled.num_states(), labeled.num_actions(), kind, transitions)
}

/// Labeled data alone.
pub fn apply_no_sharing(labeled: &Dataset) -> Result<EffectiveDataset> {
    let empty = Dataset::empty(labeled.num_states(), labeled.num_actions(), "none");
    share_with(StrategyKind::NoSharing, labeled, &empty, |_| 0.0, None)
}

/// Unlabeled transitions enter with reward 0 and weight 1.
pub fn apply_uds(labeled: &Dataset, unlabeled: &Dataset) -> Result<EffectiveDataset> {
    share_with(StrategyKind::Uds, labeled, unlabeled, |_| 0.0, None)
}

/// Unlabeled transitions enter with their true reward (oracle baseline).
pub fn apply_sharing_all(
    labeled: &Dataset,
    unlabeled: &Dataset,
    oracle: &TabularMdp,
) -> Result<EffectiveDataset> {
    check_oracle(labeled, oracle)?;
    share_with(
        StrategyKind::SharingAll,
        labeled,
        unlabeled,
        |t| oracle.reward(t.state, t.action),
        None,
    )
}

fn check_oracle(labeled: &Dataset, oracle: &TabularMdp) -> Result<()> {
    mdp::check_len("oracle states", labeled.num_states(), oracle.num_states())?;
    mdp::check_len("oracle actions", labeled.num_actions(), oracle.num_actions())
}

/// Tabular reward regression with shrinkage toward the global labeled mean:
/// `(sum r + smoothing * prior) / (n + smoothing)`, prior where `n = 0`.
pub fn fit_reward_predictor(labeled: &Dataset, smoothing: f64) -> Result<Vec<f64>> {
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if smoothing < 0.0 {
        return Err(Error::InvalidParameter("smoothing must be >= 0".into()));
    }
    let na = labeled.num_actions();
    let sa = labeled.num_states() * na;
    let mut sums = vec![0.0; sa];
    let mut counts = vec![0usize; sa];
    let mut total = 0.0;
    let mut n = 0usize;
    for (index, t) in labeled.transitions().iter().enumerate() {
        let r = t.reward.ok_or(Error::UnlabeledInLabeled { index })?;
        sums[t.state * na + t.action] += r;
        counts[t.state * na + t.action] += 1;
        total += r;
        n += 1;
    }
    let prior = total / n as f64;
    Ok((0..sa)
        .map(|i| {
            if counts[i] == 0 {
                prior
            } else {
                ((sums[i] + smoothing * prior) / (counts[i] as f64 + smoothing)).clamp(0.0, 1.0)
            }
        })
        .collect())
}

/// Unlabeled transitions get the predicted reward `r_phi(s, a)`.
pub fn apply_reward_predictor(
    labeled: &Dataset,
    unlabeled: &Dataset,
    predictor: &[f64],
) -> Result<EffectiveDataset> {
    mdp::check_len(
        "reward predictor",
        labeled.num_states() * labeled.num_actions(),
        predictor.len(),
    )?;
    let na = labeled.num_actions();
    share_with(
        StrategyKind::RewardPredictor,
        labeled,
        unlabeled,
        |t| predictor[t.state * na + t.action].clamp(0.0, 1.0),
        None,
    )
}

/// Empirical `(s, a)` distribution of a dataset.
pub fn dataset_distribution(dataset: &Dataset) -> Result<OccupancyMeasure> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = dataset.len() as f64;
    let density = dataset.counts_sa().iter().map(|&c| c as f64 / n).collect();
    OccupancyMeasure::from_density(dataset.num_states(), dataset.num_actions(), density)
}

/// Per-pair sharing weights that move the effective `(s, a)` distribution
/// toward `target`, keeping every labeled transition at weight 1.
fn weights_toward(labeled: &Dataset, unlabeled: &Dataset, target: &[f64]) -> Vec<f64> {
    let na = labeled.num_actions();
    let total = (labeled.len() + unlabeled.len()) as f64;
    let per_pair: Vec<f64> = target
        .iter()
        .zip(labeled.counts_sa().iter().zip(unlabeled.counts_sa()))
        .map(|(&p, (&l, &u))| {
            if u == 0 {
                0.0
            } else {
                ((p * total - l as f64) / u as f64).clamp(0.0, 1.0)
            }
        })
        .collect();
    unlabeled
        .transitions()
        .iter()
        .map(|t| per_pair[t.state * na + t.action])
        .collect()
}

/// Dispatches on `spec.kind`.
pub fn apply_strategy(
    spec: &StrategySpec,
    labeled: &Dataset,
    unlabeled: &Dataset,
    ctx: &StrategyContext<'_>,
) -> Result<EffectiveDataset> {
    spec.validate()?;
    let kind = spec.kind;
    let oracle = || {
        ctx.oracle.ok_or(Error::MissingContext {
            strategy: kind.name(),
            needs: "oracle MDP",
        })
    };
    let q = || {
        ctx.conservative_q.ok_or(Error::MissingContext {
            strategy: kind.name(),
            needs: "conservative Q-values of the labeled-only solution",
        })
    };
    match kind {
        StrategyKind::NoSharing => apply_no_sharing(labeled),
        StrategyKind::Uds => apply_uds(labeled, unlabeled),
        StrategyKind::SharingAll => apply_sharing_all(labeled, unlabeled, oracle()?),
        StrategyKind::RewardPredictor => match ctx.predictor {
            Some(p) => apply_reward_predictor(labeled, unlabeled, p),
            None => {
                let p = fit_reward_predictor(labeled, spec.predictor_smoothing)?;
                apply_reward_predictor(labeled, unlabeled, &p)
            }
        },
        StrategyKind::CdsFilter | StrategyKind::CdsSoft => {
            let mdp = oracle()?;
            check_oracle(labeled, mdp)?;
            let mode = if kind == StrategyKind::CdsFilter {
                WeightMode::Hard
            } else {
                WeightMode::Soft
            };
            let w = cds_weights(unlabeled, labeled, q()?, spec, mode)?;
            share_with(
                kind,
                labeled,
                unlabeled,
                |t| mdp.reward(t.state, t.action),
                Some(&w.weights),
            )
        }
        StrategyKind::CdsUds => {
            let w = cds_weights(unlabeled, labeled, q()?, spec, spec.cds_mode)?;
            share_with(kind, labeled, unlabeled, |_| 0.0, Some(&w.weights))
        }
        StrategyKind::OptimalReweight => {
            let rw = ctx.reweight.ok_or(Error::MissingContext {
                strategy: kind.name(),
                needs: "learned-policy occupancy and reweighting constants",
            })?;
            let d_l = dataset_distribution(labeled)?;
            let sol = optimal_reweight(rw.d_pi, &d_l, rw.c1, rw.c2)?;
            let w = weights_toward(labeled, unlabeled, &sol.p);
            share_with(kind, labeled, unlabeled, |_| 0.0, Some(&w))
        }
    }
}

/// Multi-task view: transitions tagged with `task` keep their rewards and
/// form the labeled set; everything else becomes the unlabeled pool.
pub fn split_by_task(dataset: &Dataset, task: usize) -> Result<(Dataset, Dataset)> {
    let (own, other): (Vec<Transition>, Vec<Transition>) = dataset
        .transitions()
        .iter()
        .partition(|t| t.task_id == Some(task));
    let other = other
        .into_iter()
        .map(|t| Transition { reward: None, ..t })
        .collect();
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    Ok((
        Dataset::new(ns, na, own, format!("task{task}"))?,
        Dataset::new(ns, na, other, format!("other->{task}"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_dataset, Transition};
    use crate::mdp::families::random_dense;
    use crate::mdp::TabularPolicy;

    fn pair_instance() -> (Dataset, Dataset) {
        // three labeled r=1 transitions at (0,0) plus one unlabeled
        let labeled = Dataset::new(
            2,
            2,
            vec![Transition::labeled(0, 0, 1, 1.0); 3],
            "l",
        )
        .unwrap();
        let unlabeled = Dataset::new(2, 2, vec![Transition::unlabeled(0, 0, 0)], "u").unwrap();
        (labeled, unlabeled)
    }

    #[test]
    fn uds_direct_substitution() {
        let (l, u) = pair_instance();
        let eff = apply_uds(&l, &u).unwrap();
        assert_eq!(eff.f(0, 0), 0.75);
        assert_eq!(eff.r_eff_table()[0], 0.75);
        assert_eq!(eff.counts_eff()[0], 4);
        assert_eq!(eff.labeled_counts()[0], 3);
    }

    #[test]
    fn uds_without_unlabeled_data_is_no_sharing() {
        let mdp = random_dense(4, 2, 0.9, 3);
        let l = sample_dataset(&mdp, &TabularPolicy::uniform(4, 2), 300, 1, true).unwrap();
        let empty = Dataset::empty(4, 2, "u");
        let uds = apply_uds(&l, &empty).unwrap();
        let ns = apply_no_sharing(&l).unwrap();
        assert!(uds.f_table().iter().all(|&f| f == 1.0));
        assert_eq!(uds.r_eff_table(), ns.r_eff_table());
        assert_eq!(uds.behavior(), ns.behavior());
        for i in 0..8 {
            if l.counts_sa()[i] > 0 {
                let mean = l
                    .transitions()
                    .iter()
                    .filter(|t| t.state * 2 + t.action == i)
                    .map(|t| t.reward.unwrap())
                    .sum::<f64>()
                    / l.counts_sa()[i] as f64;
                assert!((uds.r_eff_table()[i] - mean).abs() < 1e-12);
            }
        }
        let all = apply_sharing_all(&l, &empty, &mdp).unwrap();
        assert_eq!(all.r_eff_table(), ns.r_eff_table());
    }

    #[test]
    fn rewards_in_unlabeled_input_are_rejected() {
        let (l, _) = pair_instance();
        assert!(matches!(
            apply_uds(&l, &l),
            Err(Error::LabeledInUnlabeled { index: 0 })
        ));
        assert!(matches!(
            apply_uds(&l.without_rewards(), &l.without_rewards()),
            Err(Error::UnlabeledInLabeled { .. })
        ));
    }

    #[test]
    fn predictor_contracts() {
        let l = Dataset::new(
            2,
            2,
            vec![
                Transition::labeled(0, 0, 1, 1.0),
                Transition::labeled(0, 1, 1, 0.0),
                Transition::labeled(1, 0, 0, 0.5),
            ],
            "l",
        )
        .unwrap();
        let exact = fit_reward_predictor(&l, 0.0).unwrap();
        assert_eq!(&exact[..3], &[1.0, 0.0, 0.5]);
        assert_eq!(exact[3], 0.5);
        let smooth = fit_reward_predictor(&l, 2.0).unwrap();
        assert_eq!(smooth[3], 0.5);
        assert!((smooth[0] - (1.0 + 2.0 * 0.5) / 3.0).abs() < 1e-15);
        assert!(matches!(
            fit_reward_predictor(&Dataset::empty(2, 2, "e"), 1.0),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn predictor_limits_match_other_strategies() {
        let mdp = random_dense(4, 2, 0.9, 8);
        let pi = TabularPolicy::uniform(4, 2);
        let l = sample_dataset(&mdp, &pi, 200, 1, true).unwrap();
        let u = sample_dataset(&mdp, &pi, 800, 2, false).unwrap();
        let oracle = apply_reward_predictor(&l, &u, mdp.reward_table()).unwrap();
        let all = apply_sharing_all(&l, &u, &mdp).unwrap();
        for (a, b) in oracle.r_eff_table().iter().zip(all.r_eff_table()) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = apply_reward_predictor(&l, &u, &[0.0; 8]).unwrap();
        let uds = apply_uds(&l, &u).unwrap();
        assert_eq!(zero.r_eff_table(), uds.r_eff_table());
        assert_eq!(zero.f_table(), uds.f_table());
    }

    #[test]
    fn missing_context_is_reported() {
        let (l, u) = pair_instance();
        let ctx = StrategyContext::default();
        for kind in [
            StrategyKind::SharingAll,
            StrategyKind::CdsFilter,
            StrategyKind::CdsUds,
            StrategyKind::OptimalReweight,
        ] {
            assert!(matches!(
                apply_strategy(&StrategySpec::new(kind), &l, &u, &ctx),
                Err(Error::MissingContext { .. })
            ));
        }
        let eff = apply_strategy(&StrategySpec::new(StrategyKind::NoSharing), &l, &u, &ctx).unwrap();
        assert_eq!(eff.transitions().len(), l.len());
    }

    #[test]
    fn neutral_cds_weights_reproduce_uds() {
        let mdp = random_dense(3, 2, 0.9, 5);
        let pi = TabularPolicy::uniform(3, 2);
        let l = sample_dataset(&mdp, &pi, 100, 1, true).unwrap();
        let u = sample_dataset(&mdp, &pi, 300, 2, false).unwrap();
        // a constant Q table puts every candidate exactly at the threshold
        let q = vec![0.3; 6];
        let ctx = StrategyContext {
            conservative_q: Some(&q),
            ..Default::default()
        };
        let mut spec = StrategySpec::new(StrategyKind::CdsUds);
        spec.cds_mode = WeightMode::Hard;
        let cds = apply_strategy(&spec, &l, &u, &ctx).unwrap();
        let uds = apply_uds(&l, &u).unwrap();
        assert_eq!(cds.f_table(), uds.f_table());
        assert_eq!(cds.r_eff_table(), uds.r_eff_table());
        assert_eq!(cds.behavior(), uds.behavior());
    }

    #[test]
    fn split_by_task_strips_foreign_rewards() {
        let mdp = random_dense(3, 2, 0.9, 6);
        let pi = TabularPolicy::uniform(3, 2);
        let a = sample_dataset(&mdp, &pi, 30, 1, true).unwrap().with_task_id(0);
        let b = sample_dataset(&mdp, &pi, 40, 2, true).unwrap().with_task_id(1);
        let all = crate::data::merge(&[a, b]).unwrap();
        let (own, other) = split_by_task(&all, 0).unwrap();
        assert_eq!((own.len(), other.len()), (30, 40));
        assert!(other.transitions().iter().all(|t| t.reward.is_none()));
        assert!(apply_uds(&own, &other).is_ok());
    }

    #[test]
    fn effective_csv_has_extra_columns() {
        let (l, u) = pair_instance();
        let eff = apply_uds(&l, &u).unwrap();
        let mut buf = Vec::new();
        eff.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "state,action,next_state,reward,task_id,weight,assigned_reward"
        );
        assert_eq!(lines.last().unwrap(), "0,0,0,,,1.0,0.0");
    }
}
