use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{QualitySpec, SampleOptions, SamplingMode};
use crate::error::{Error, Result};
use crate::mdp::families::MdpSpec;
use crate::relabel::StrategySpec;
use crate::solver::ConservativeConfig;

/// One data source: behavior quality and transition count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub quality: QualitySpec,
    pub size: usize,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default)]
    pub reward_noise: f64,
}

impl DataSpec {
    pub fn new(quality: QualitySpec, size: usize) -> Self {
        Self {
            quality,
            size,
            sampling: SamplingMode::Iid,
            reward_noise: 0.0,
        }
    }

    pub fn options(&self, labeled: bool) -> SampleOptions {
        SampleOptions {
            labeled,
            mode: self.sampling,
            reward_noise: self.reward_noise,
        }
    }
}

/// A labeled/unlabeled pairing, one row of a composition grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    pub name: String,
    pub labeled: DataSpec,
    pub unlabeled: DataSpec,
}

impl Composition {
    pub fn new(name: impl Into<String>, labeled: DataSpec, unlabeled: DataSpec) -> Self {
        Self {
            name: name.into(),
            labeled,
            unlabeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mdp: MdpSpec,
    /// Single composition; ignored when `compositions` is non-empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compositions: Vec<Composition>,
    pub strategies: Vec<StrategySpec>,
    #[serde(default)]
    pub solver: ConservativeConfig,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel: Option<usize>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` and applies `key.path=value` overrides before validation.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seeds must be non-empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidParameter("strategies must be non-empty".into()));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        self.solver.validate()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta {} outside (0, 1)", self.delta)));
        }
        let comps = self.compositions()?;
        for c in &comps {
            for d in [&c.labeled, &c.unlabeled] {
                if d.size == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "composition `{}`: sizes must be >= 1",
                        c.name
                    )));
                }
                d.quality.validate()?;
            }
        }
        if self.parallel == Some(0) {
            return Err(Error::InvalidParameter("parallel must be >= 1".into()));
        }
        Ok(())
    }

    /// The compositions to sweep, in config order.
    pub fn compositions(&self) -> Result<Vec<Composition>> {
        if !self.compositions.is_empty() {
            return Ok(self.compositions.clone());
        }
        match (&self.labeled, &self.unlabeled) {
            (Some(l), Some(u)) => Ok(vec![Composition::new(
                format!("{}{}+{}{}", l.quality.name(), l.size, u.quality.name(), u.size),
                l.clone(),
                u.clone(),
            )]),
            _ => Err(Error::InvalidParameter(
                "either `compositions` or both `labeled` and `unlabeled` are required".into(),
            )),
        }
    }

    /// SHA-256 of the canonical JSON of every field that affects results
    /// (keys sorted; output location and thread count excluded).
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("output_dir");
            map.remove("parallel");
        }
        let canonical = value.to_string();
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Sets `a.b.c=value` in a JSON document. The value is parsed as JSON when
/// possible and taken as a string otherwise. Every parent must exist.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidParameter(format!("override `{assignment}` lacks `=`")))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one element");
    let mut cur = doc;
    for k in parents {
        cur = match cur {
            Value::Object(map) => map.get_mut(*k),
            Value::Array(items) => k.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::UnknownKey(path.to_string()))?;
    }
    match cur {
        Value::Object(map) => {
            map.insert(last.to_string(), parsed);
        }
        Value::Array(items) => {
            let slot = last
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| Error::UnknownKey(path.to_string()))?;
            *slot = parsed;
        }
        _ => return Err(Error::UnknownKey(path.to_string())),
    }
    Ok(())
}
