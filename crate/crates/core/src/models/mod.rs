//! Primitive banks, upper-layer predictors, the leader-to-follower map, and
//! the four controllers built from them.

mod controller;
mod fusion;
mod lower;
mod ltof;
mod upper;

pub use controller::{
    BaselineController, Controller, ControllerKind, LearningController, PlaybackController, SamplingController,
    StepOutput,
};
pub use fusion::{fuse, fuse_candidates, playback_window, FusionDiagnostics, FusionOutcome, FusionRequest};
pub use lower::{lower_input, lower_training_pairs, train_lower_bank, InputJitter, LowerBank};
pub use ltof::{train_ltof, LToFModel};
pub use upper::{
    select_primitives, train_baseline, train_learning_upper, train_sampling_upper, upper_sequences, UpperHead,
    UpperModel, UpperShape,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::state::CHANNELS;

/// Convex weights: non-negative, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProportionVector(Vec<f64>);

impl ProportionVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::NoData);
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("proportions must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("proportions sum to {sum}")));
        }
        Ok(ProportionVector(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum::<f64>()
    }

    /// Effective sample size `1 / sum(w^2)`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.0.iter().map(|w| w * w).sum::<f64>()
    }

    /// `sum_m w_m * vectors[m]`.
    pub fn combine(&self, vectors: &[&[f64]]) -> Result<Vec<f64>> {
        check_len(self.len(), vectors.len())?;
        let dim = vectors[0].len();
        let mut out = vec![0.0; dim];
        for (w, v) in self.0.iter().zip(vectors) {
            check_len(dim, v.len())?;
            if *w == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(v.iter()) {
                *o += w * x;
            }
        }
        Ok(out)
    }
}

/// Max-shifted normalized exponential.
pub fn softmax(logits: &[f64]) -> Result<ProportionVector> {
    if logits.is_empty() {
        return Err(Error::NoData);
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProportionVector(exps.into_iter().map(|e| e / sum).collect()))
}

/// Channel weights of the candidate cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.1,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().all(|&x| x == 0.0) {
            return Err(Error::invalid(
                "cost weights must be non-negative with at least one positive",
            ));
        }
        Ok(())
    }
}

/// How many predicted steps enter the candidate cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostWindow {
    /// Only the first predicted step.
    #[default]
    FirstStep,
    /// Mean over the whole horizon.
    Full,
}

/// Candidate generation and weighting settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CEConfig {
    pub rho: f64,
    pub top_m: usize,
    pub samples_per_primitive: usize,
    /// Noise standard deviation per channel: angle, velocity, torque.
    pub noise_sigma: [f64; CHANNELS],
    pub cost_window: CostWindow,
    pub seed: u64,
}

impl Default for CEConfig {
    fn default() -> Self {
        CEConfig {
            rho: 0.01,
            top_m: 50,
            samples_per_primitive: 10,
            noise_sigma: [0.02; CHANNELS],
            cost_window: CostWindow::FirstStep,
            seed: 0,
        }
    }
}

impl CEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho must be positive"));
        }
        if self.top_m == 0 || self.samples_per_primitive == 0 {
            return Err(Error::invalid("top_m and samples_per_primitive must be at least 1"));
        }
        if self.noise_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Weighted per-channel mean squared difference between two sequences of
/// flattened states. `window` selects the first step or the whole sequence.
pub fn compute_cost(
    candidate: &[Vec<f64>],
    reference: &[Vec<f64>],
    w: &CostWeights,
    window: CostWindow,
) -> Result<f64> {
    check_len(reference.len(), candidate.len())?;
    if candidate.is_empty() {
        return Err(Error::NoData);
    }
    let steps = match window {
        CostWindow::FirstStep => 1,
        CostWindow::Full => candidate.len(),
    };
    let mut total = 0.0;
    for (c, r) in candidate.iter().zip(reference).take(steps) {
        check_len(r.len(), c.len())?;
        total += step_cost(c, r, w);
    }
    Ok(total / steps as f64)
}

pub(crate) fn step_cost(c: &[f64], r: &[f64], w: &CostWeights) -> f64 {
    let d = c.len() / CHANNELS;
    let mse = |ch: usize| -> f64 {
        let s = ch * d;
        c[s..s + d]
            .iter()
            .zip(&r[s..s + d])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / d as f64
    };
    w.alpha * mse(0) + w.beta * mse(1) + w.gamma * mse(2)
}

/// Weights `exp(-cost/rho)` over the `top_m` lowest costs, zero elsewhere.
/// Ties go to the lower index. Non-finite costs are never selected.
pub fn ce_weights(costs: &[f64], rho: f64, top_m: usize) -> Result<ProportionVector> {
    if !(rho > 0.0) || top_m == 0 {
        return Err(Error::invalid("rho must be positive and top_m at least 1"));
    }
    if costs.len() < top_m {
        return Err(Error::invalid(format!("{} costs for top_m = {top_m}", costs.len())));
    }
    let mut order: Vec<usize> = (0..costs.len()).filter(|&i| costs[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::NoViableSamples);
    }
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    order.truncate(top_m);
    let best = costs[order[0]];
    let mut weights = vec![0.0; costs.len()];
    let mut sum = 0.0;
    for &i in &order {
        let e = (-(costs[i] - best) / rho).exp();
        weights[i] = e;
        sum += e;
    }
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(ProportionVector(weights))
}
