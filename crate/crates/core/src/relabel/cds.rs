use serde::{Deserialize, Serialize};

use super::StrategySpec;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mdp;

/// Hard filter (`Delta >= 0`) or sigmoid weights `sigma(Delta / tau)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdsWeights {
    /// One weight per candidate transition, in candidate order.
    pub weights: Vec<f64>,
    /// `Delta(s, a)` per candidate transition.
    pub deltas: Vec<f64>,
    /// k-th percentile of the reference Q-values.
    pub threshold: f64,
    /// Temperature used for each candidate (soft mode only).
    pub temperatures: Vec<f64>,
}

/// k-th percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], k: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=100.0).contains(&k) {
        return Err(Error::InvalidParameter(format!("percentile {k} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = k / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Conservative data sharing weights for `candidate` transitions.
///
/// `Delta(s, a) = Q(s, a) - P_k{Q(s', a') : (s', a') in reference}`. In soft
/// mode the temperature is an exponential running average of `|Delta|` over
/// fixed-size batches in candidate order, seeded with the first batch mean and
/// clipped to `spec.temperature_clip`.
pub fn cds_weights(
    candidate: &Dataset,
    reference: &Dataset,
    conservative_q: &[f64],
    spec: &StrategySpec,
    mode: WeightMode,
) -> Result<CdsWeights> {
    spec.validate()?;
    let na = reference.num_actions();
    mdp::check_len("conservative Q", reference.num_states() * na, conservative_q.len())?;
    mdp::check_len("candidate actions", na, candidate.num_actions())?;
    if reference.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let reference_q: Vec<f64> = reference
        .transitions()
        .iter()
        .map(|t| conservative_q[t.state * na + t.action])
        .collect();
    let threshold = percentile(&reference_q, spec.k_percentile)?;
    let deltas: Vec<f64> = candidate
        .transitions()
        .iter()
        .map(|t| conservative_q[t.state * na + t.action] - threshold)
        .collect();

    let (weights, temperatures) = match mode {
        WeightMode::Hard => (
            deltas.iter().map(|&d| if d >= 0.0 { 1.0 } else { 0.0 }).collect(),
            Vec::new(),
        ),
        WeightMode::Soft => {
            let (lo, hi) = spec.temperature_clip;
            let hi = hi.unwrap_or(f64::INFINITY);
            let mut running: Option<f64> = None;
            let mut weights = Vec::with_capacity(deltas.len());
            let mut temps = Vec::with_capacity(deltas.len());
            for batch in deltas.chunks(spec.batch_size) {
                let mean_abs = batch.iter().map(|d| d.abs()).sum::<f64>() / batch.len() as f64;
                let avg = match running {
                    None => mean_abs,
                    Some(prev) => {
                        spec.temperature_decay * prev + (1.0 - spec.temperature_decay) * mean_abs
                    }
                };
                running = Some(avg);
                let tau = avg.clamp(lo, hi).max(f64::MIN_POSITIVE);
                for &d in batch {
                    weights.push(sigmoid(d / tau));
                    temps.push(tau);
                }
            }
            (weights, temps)
        }
    };
    Ok(CdsWeights {
        weights,
        deltas,
        threshold,
        temperatures,
    })
}
