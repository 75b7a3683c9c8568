//! Behavior policies of graded quality and seeded offline datasets.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, TabularMdp, TabularPolicy};

/// One logged transition. `reward == None` marks it unlabeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: Option<f64>,
    pub task_id: Option<usize>,
}

impl Transition {
    pub fn labeled(state: usize, action: usize, next_state: usize, reward: f64) -> Self {
        Self {
            state,
            action,
            next_state,
            reward: Some(reward),
            task_id: None,
        }
    }

    pub fn unlabeled(state: usize, action: usize, next_state: usize) -> Self {
        Self {
            state,
            action,
            next_state,
            reward: None,
            task_id: None,
        }
    }
}

/// An ordered multiset of transitions with its count tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<Transition>,
    counts_sa: Vec<usize>,
    counts_s: Vec<usize>,
    label: String,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<Transition>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mut counts_sa = vec![0; num_states * num_actions];
        for t in &transitions {
            if t.state >= num_states || t.next_state >= num_states {
                return Err(Error::DimensionMismatch {
                    what: "transition state",
                    expected: num_states,
                    found: t.state.max(t.next_state),
                });
            }
            if t.action >= num_actions {
                return Err(Error::DimensionMismatch {
                    what: "transition action",
                    expected: num_actions,
                    found: t.action,
                });
            }
            if let Some(r) = t.reward {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::RewardOutOfRange {
                        state: t.state,
                        action: t.action,
                        value: r,
                    });
                }
            }
            counts_sa[t.state * num_actions + t.action] += 1;
        }
        let counts_s = counts_sa
            .chunks(num_actions)
            .map(|row| row.iter().sum())
            .collect();
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            counts_sa,
            counts_s,
            label: label.into(),
            seed: None,
        })
    }

    pub fn empty(num_states: usize, num_actions: usize, label: impl Into<String>) -> Self {
        Self::new(num_states, num_actions, Vec::new(), label).expect("empty dataset is valid")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// `|D(s, a)|`, row-major.
    pub fn counts_sa(&self) -> &[usize] {
        &self.counts_sa
    }

    /// `|D(s)|`.
    pub fn counts_s(&self) -> &[usize] {
        &self.counts_s
    }

    pub fn count(&self, s: usize, a: usize) -> usize {
        self.counts_sa[s * self.num_actions + a]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Copy with every reward removed.
    pub fn without_rewards(&self) -> Self {
        let mut out = self.clone();
        out.transitions.iter_mut().for_each(|t| t.reward = None);
        out
    }

    /// Copy with every transition tagged as coming from `task`.
    pub fn with_task_id(&self, task: usize) -> Self {
        let mut out = self.clone();
        out.transitions.iter_mut().for_each(|t| t.task_id = Some(task));
        out
    }

    /// Coverage proxy: `(min, mean)` of `|D(s, a)|` over all pairs.
    pub fn coverage(&self) -> (usize, f64) {
        let min = self.counts_sa.iter().copied().min().unwrap_or(0);
        let mean = self.len() as f64 / self.counts_sa.len() as f64;
        (min, mean)
    }

    /// Writes `state,action,next_state,reward,task_id`; the reward cell is
    /// empty for unlabeled transitions.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for t in &self.transitions {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(
        reader: R,
        num_states: usize,
        num_actions: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let transitions = r.deserialize().collect::<std::result::Result<Vec<Transition>, _>>()?;
        Self::new(num_states, num_actions, transitions, label)
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            label: self.label.clone(),
            seed: self.seed,
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_transitions: self.len(),
            num_labeled: self.transitions.iter().filter(|t| t.reward.is_some()).count(),
        }
    }
}

/// Provenance record stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub label: String,
    pub seed: Option<u64>,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_transitions: usize,
    pub num_labeled: usize,
}

/// Concatenates datasets over the same state and action spaces.
pub fn merge(datasets: &[Dataset]) -> Result<Dataset> {
    let first = datasets.first().ok_or(Error::EmptyDataset)?;
    let (ns, na) = (first.num_states, first.num_actions);
    let mut transitions = Vec::with_capacity(datasets.iter().map(Dataset::len).sum());
    let mut labels = Vec::new();
    for d in datasets {
        mdp::check_len("merged states", ns, d.num_states)?;
        mdp::check_len("merged actions", na, d.num_actions)?;
        transitions.extend_from_slice(&d.transitions);
        if !d.is_empty() {
            labels.push(d.label.as_str());
        }
    }
    let label = if labels.is_empty() {
        first.label.clone()
    } else {
        labels.join("+")
    };
    let mut out = Dataset::new(ns, na, transitions, label)?;
    if datasets.iter().filter(|d| !d.is_empty()).count() <= 1 {
        out.seed = datasets.iter().find(|d| !d.is_empty()).unwrap_or(first).seed;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityKind {
    Expert,
    Medium,
    Random,
    SoftOptimal,
}

/// Quality tier of a behavior policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitySpec {
    pub kind: QualityKind,
    /// Weight on the uniform policy for `medium`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Softmax temperature for `soft_optimal`.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_temperature() -> f64 {
    1.0
}

impl QualitySpec {
    pub fn new(kind: QualityKind) -> Self {
        Self {
            kind,
            epsilon: default_epsilon(),
            temperature: default_temperature(),
        }
    }

    pub fn expert() -> Self {
        Self::new(QualityKind::Expert)
    }

    pub fn medium() -> Self {
        Self::new(QualityKind::Medium)
    }

    pub fn random() -> Self {
        Self::new(QualityKind::Random)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            QualityKind::Expert => "expert",
            QualityKind::Medium => "medium",
            QualityKind::Random => "random",
            QualityKind::SoftOptimal => "soft_optimal",
        }
    }
}

/// Behavior policy of the requested quality on `mdp`.
///
/// expert: greedy optimal (lowest action index on ties); random: uniform;
/// medium: `(1 - eps) expert + eps uniform`; soft_optimal: softmax of `Q*`.
pub fn behavior_policy(mdp: &TabularMdp, spec: &QualitySpec) -> Result<TabularPolicy> {
    spec.validate()?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let uniform = TabularPolicy::uniform(ns, na);
    Ok(match spec.kind {
        QualityKind::Random => uniform,
        QualityKind::Expert => mdp::optimal_policy(mdp)?.0,
        QualityKind::Medium => mdp::optimal_policy(mdp)?.0.mix(&uniform, spec.epsilon)?,
        QualityKind::SoftOptimal => {
            let (_, q) = mdp::optimal_policy(mdp)?;
            let mut probs = Vec::with_capacity(ns * na);
            for row in q.chunks(na) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = row.iter().map(|x| ((x - m) / spec.temperature).exp()).collect();
                let z: f64 = w.iter().sum();
                probs.extend(w.iter().map(|x| x / z));
            }
            TabularPolicy::new(ns, na, probs)?
        }
    })
}

/// How transitions are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SamplingMode {
    /// i.i.d. from the exact discounted state marginal of the policy.
    #[default]
    Iid,
    /// Truncated episodes from the initial distribution.
    Rollout { horizon: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub labeled: bool,
    #[serde(default)]
    pub mode: SamplingMode,
    /// Half-width of symmetric uniform reward noise. The noise is narrowed
    /// near 0 and 1 so labels stay in `[0, 1]` with mean `r(s, a)`.
    #[serde(default)]
    pub reward_noise: f64,
}

impl SampleOptions {
    pub fn labeled(labeled: bool) -> Self {
        Self {
            labeled,
            mode: SamplingMode::Iid,
            reward_noise: 0.0,
        }
    }
}

/// Inverse-CDF sampler over a fixed discrete distribution.
#[derive(Debug, Clone)]
struct Categorical {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = self.cumulative[self.cumulative.len() - 1];
        let u = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// Draws `num_transitions` transitions of `policy` on `mdp`.
pub fn sample_dataset(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    num_transitions: usize,
    seed: u64,
    labeled: bool,
) -> Result<Dataset> {
    sample_dataset_with(mdp, policy, num_transitions, seed, &SampleOptions::labeled(labeled))
}

pub fn sample_dataset_with(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    num_transitions: usize,
    seed: u64,
    options: &SampleOptions,
) -> Result<Dataset> {
    if num_transitions == 0 {
        return Err(Error::InvalidParameter(
            "num_transitions must be at least 1".into(),
        ));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    mdp::check_len("policy states", ns, policy.num_states())?;
    mdp::check_len("policy actions", na, policy.num_actions())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions: Vec<Categorical> = (0..ns).map(|s| Categorical::new(policy.row(s))).collect();
    let dynamics: Vec<Categorical> = (0..ns * na)
        .map(|sa| Categorical::new(mdp.next_dist(sa / na, sa % na)))
        .collect();

    let draw = |s: usize, rng: &mut ChaCha8Rng| -> Transition {
        let a = actions[s].sample(rng);
        let next_state = dynamics[s * na + a].sample(rng);
        let reward = options.labeled.then(|| {
            let r = mdp.reward(s, a);
            let half = options.reward_noise.min(r).min(1.0 - r);
            if half > 0.0 {
                (r + rng.gen_range(-half..=half)).clamp(0.0, 1.0)
            } else {
                r
            }
        });
        Transition {
            state: s,
            action: a,
            next_state,
            reward,
            task_id: None,
        }
    };

    let mut transitions = Vec::with_capacity(num_transitions);
    match options.mode {
        SamplingMode::Iid => {
            let states = Categorical::new(&mdp::occupancy(mdp, policy)?.state_marginal());
            for _ in 0..num_transitions {
                let s = states.sample(&mut rng);
                transitions.push(draw(s, &mut rng));
            }
        }
        SamplingMode::Rollout { horizon } => {
            let horizon = horizon.max(1);
            let start = Categorical::new(mdp.initial_dist());
            while transitions.len() < num_transitions {
                let mut s = start.sample(&mut rng);
                for _ in 0..horizon {
                    if transitions.len() == num_transitions {
                        break;
                    }
                    let t = draw(s, &mut rng);
                    s = t.next_state;
                    transitions.push(t);
                }
            }
        }
    }
    let label = format!(
        "{}/{}",
        if options.labeled { "labeled" } else { "unlabeled" },
        num_transitions
    );
    let mut ds = Dataset::new(ns, na, transitions, label)?;
    ds.seed = Some(seed);
    Ok(ds)
}

/// Same as [`sample_dataset`] but with a caller-chosen provenance label.
pub fn sample_labeled_as(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    num_transitions: usize,
    seed: u64,
    options: &SampleOptions,
    label: impl Into<String>,
) -> Result<Dataset> {
    let mut ds = sample_dataset_with(mdp, policy, num_transitions, seed, options)?;
    ds.label = label.into();
    Ok(ds)
}
