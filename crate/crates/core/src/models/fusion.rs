use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::lower::{lower_input, LowerBank};
use super::ltof::LToFModel;
use super::{ce_weights, step_cost, CEConfig, CostWeights, CostWindow, ProportionVector};
use crate::error::{check_len, Error, Result};
use crate::seeding::stream_rng;
use crate::state::{NormStats, Trajectory, CHANNELS};

/// Inputs of one fusion step.
#[derive(Clone, Copy, Debug)]
pub struct FusionRequest<'a> {
    /// Normalized current follower state `F_k`.
    pub follower: &'a [f64],
    /// Normalized follower reference `F_{k+1}, F_{k+2}, ...`. Entries past
    /// the end are taken to equal the last one.
    pub window: &'a [Vec<f64>],
    pub tick: usize,
    /// Seed of the candidate noise; combined with `tick` and the candidate
    /// index.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FusionDiagnostics {
    pub entropy: f64,
    pub min_cost: f64,
    pub effective_samples: f64,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutcome {
    /// Fused next leader state, flattened, physical units.
    pub command: Vec<f64>,
    pub weights: ProportionVector,
    pub costs: Vec<f64>,
    /// First step of every candidate, flattened, physical units.
    pub first_steps: Vec<Vec<f64>>,
    pub diagnostics: FusionDiagnostics,
}

fn clamped<T>(v: &[T], i: usize) -> &T {
    &v[i.min(v.len() - 1)]
}

/// Noise-free leader sequences, one per primitive, in physical units.
fn base_sequences(bank: &LowerBank, req: &FusionRequest, steps: usize) -> Vec<Vec<Vec<f64>>> {
    let n = bank.horizon;
    bank.primitives
        .par_iter()
        .map(|mlp| {
            (0..steps)
                .map(|i| {
                    let ctx = if i == 0 {
                        req.follower
                    } else {
                        clamped(req.window, i - 1).as_slice()
                    };
                    let reference = clamped(req.window, i + n - 1);
                    let y = mlp.forward_unchecked(&lower_input(ctx, reference));
                    bank.norm.denormalize_unchecked(&y)
                })
                .collect()
        })
        .collect()
}

/// Adds per-channel Gaussian noise to a copy of `base`.
fn perturb(base: &[Vec<f64>], sigma: &[f64; CHANNELS], seed: u64, tick: usize, index: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, &[tick as u64, index as u64]);
    base.iter()
        .map(|s| {
            let d = s.len() / CHANNELS;
            s.iter()
                .enumerate()
                .map(|(j, v)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + sigma[j / d] * z
                })
                .collect()
        })
        .collect()
}

fn sequence_cost(seq: &[Vec<f64>], ltof: &LToFModel, norm: &NormStats, window: &[Vec<f64>], cw: &CostWeights) -> f64 {
    let total: f64 = seq
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let f = ltof.predict_unchecked(&norm.normalize_unchecked(l));
            step_cost(&f, clamped(window, i), cw)
        })
        .sum();
    total / seq.len() as f64
}

fn steps_for(window: CostWindow, horizon: usize) -> usize {
    match window {
        CostWindow::FirstStep => 1,
        CostWindow::Full => horizon,
    }
}

/// Weights explicit candidate leader sequences (physical units) against a
/// normalized follower reference and returns the fused first step.
pub fn fuse_candidates(
    candidates: &[Vec<Vec<f64>>],
    ltof: &LToFModel,
    window: &[Vec<f64>],
    cw: &CostWeights,
    ce: &CEConfig,
) -> Result<FusionOutcome> {
    if candidates.is_empty() || window.is_empty() {
        return Err(Error::NoData);
    }
    let steps = steps_for(ce.cost_window, candidates[0].len());
    let costs: Vec<f64> = candidates
        .par_iter()
        .map(|c| sequence_cost(&c[..steps.min(c.len())], ltof, &ltof.norm, window, cw))
        .collect();
    let first: Vec<Vec<f64>> = candidates.iter().map(|c| c[0].clone()).collect();
    finish(first, costs, ce)
}

fn finish(first_steps: Vec<Vec<f64>>, costs: Vec<f64>, ce: &CEConfig) -> Result<FusionOutcome> {
    let weights = ce_weights(&costs, ce.rho, ce.top_m.min(costs.len()))?;
    let refs: Vec<&[f64]> = first_steps.iter().map(Vec::as_slice).collect();
    let mut command = weights.combine(&refs)?;
    // Keep the result inside the envelope of the selected candidates even
    // when summation rounds past it.
    for (j, c) in command.iter_mut().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (w, f) in weights.weights().iter().zip(&first_steps) {
            if *w > 0.0 {
                lo = lo.min(f[j]);
                hi = hi.max(f[j]);
            }
        }
        *c = c.clamp(lo, hi);
    }
    let min_cost = costs
        .iter()
        .cloned()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    let diagnostics = FusionDiagnostics {
        entropy: weights.entropy(),
        min_cost,
        effective_samples: weights.effective_sample_size(),
        candidates: costs.len(),
    };
    Ok(FusionOutcome {
        command,
        weights,
        costs,
        first_steps,
        diagnostics,
    })
}

/// One weighted-fusion step: every primitive proposes a leader sequence,
/// each proposal is replicated with noise (replica 0 stays clean), mapped to
/// follower space, costed against the reference window and averaged with
/// cross-entropy weights. Returns the first step of the fused sequence.
pub fn fuse(
    bank: &LowerBank,
    ltof: &LToFModel,
    req: &FusionRequest,
    cw: &CostWeights,
    ce: &CEConfig,
) -> Result<FusionOutcome> {
    let d = bank.state_dim();
    check_len(d, req.follower.len())?;
    if req.window.is_empty() {
        return Err(Error::NoData);
    }
    for w in req.window {
        check_len(d, w.len())?;
    }
    check_len(d, ltof.norm.dim())?;
    let steps = steps_for(ce.cost_window, bank.horizon);
    let bases = base_sequences(bank, req, steps);
    let s = ce.samples_per_primitive;
    let evaluated: Vec<(Vec<f64>, f64)> = (0..bases.len() * s)
        .into_par_iter()
        .map(|idx| {
            let base = &bases[idx / s];
            let noisy;
            let seq = if idx % s == 0 {
                base
            } else {
                noisy = perturb(base, &ce.noise_sigma, req.seed, req.tick, idx);
                &noisy
            };
            let cost = sequence_cost(seq, ltof, &bank.norm, req.window, cw);
            (seq[0].clone(), if cost.is_finite() { cost } else { f64::INFINITY })
        })
        .collect();
    let (first, costs): (Vec<_>, Vec<_>) = evaluated.into_iter().unzip();
    finish(first, costs, ce)
}

/// Normalized follower states `k+1 ..= k+len` of a recorded trajectory,
/// holding the final state past its end.
pub fn playback_window(follower: &Trajectory, norm: &NormStats, tick: usize, len: usize) -> Result<Vec<Vec<f64>>> {
    (1..=len)
        .map(|i| norm.normalize_state(follower.state_clamped(tick + i)))
        .collect()
}
