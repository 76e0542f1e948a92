use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lower::{lower_input, InputJitter, LowerBank};
use super::softmax;
use crate::error::{check_len, Error, Result};
use crate::io::{create_file, open_file, ArtifactMeta};
use crate::nn::{fit_lstm, fit_mlp, mse, train_loop, Lstm, LstmState, Mlp, SequenceSample, TrainConfig};
use crate::state::{Demonstration, NormStats};

const FORMAT_TAG: &str = "primix-upper/1";

/// What the recurrent predictor emits at each update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperHead {
    /// Follower states `1 ..= 2 * horizon` ticks ahead.
    Window,
    /// Follower state `horizon` ticks ahead, then one logit per primitive.
    Proportions { primitives: usize },
}

impl UpperHead {
    pub fn output_dim(&self, state_dim: usize, horizon: usize) -> usize {
        match self {
            UpperHead::Window => 2 * horizon * state_dim,
            UpperHead::Proportions { primitives } => state_dim + primitives,
        }
    }
}

/// Recurrent upper layer. It is stepped once every `horizon` ticks on the
/// normalized follower state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperModel {
    pub lstm: Lstm,
    pub head: UpperHead,
    pub horizon: usize,
    pub norm: NormStats,
    /// Bank indices the proportion logits refer to; empty for other heads.
    #[serde(default)]
    pub primitives: Vec<usize>,
}

impl UpperModel {
    pub fn new(lstm: Lstm, head: UpperHead, horizon: usize, norm: NormStats, primitives: Vec<usize>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let d = norm.dim();
        check_len(d, lstm.input_size())?;
        check_len(head.output_dim(d, horizon), lstm.output_size())?;
        if let UpperHead::Proportions { primitives: p } = head {
            check_len(p, primitives.len())?;
        }
        Ok(UpperModel {
            lstm,
            head,
            horizon,
            norm,
            primitives,
        })
    }

    pub fn initial_state(&self) -> LstmState {
        self.lstm.initial_state()
    }

    /// Consumes a normalized follower state.
    pub fn step(&self, state: &LstmState, follower: &[f64]) -> Result<(Vec<f64>, LstmState)> {
        self.lstm.step(state, follower)
    }

    pub fn save(&self, path: &Path, meta: Option<&ArtifactMeta>) -> Result<()> {
        let file = UpperFile {
            format: FORMAT_TAG.into(),
            model: self.clone(),
            meta: meta.cloned(),
        };
        serde_json::to_writer(create_file(path)?, &file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: UpperFile = serde_json::from_reader(std::io::BufReader::new(open_file(path)?))?;
        if f.format != FORMAT_TAG {
            return Err(Error::format(
                "upper file",
                format!("unknown format tag {:?}", f.format),
            ));
        }
        let m = f.model;
        UpperModel::new(m.lstm, m.head, m.horizon, m.norm, m.primitives)
    }
}

#[derive(Serialize, Deserialize)]
struct UpperFile {
    format: String,
    model: UpperModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ArtifactMeta>,
}

/// `count` bank indices spread evenly over `0..total`.
pub fn select_primitives(total: usize, count: usize) -> Vec<usize> {
    let count = count.min(total);
    (0..count).map(|i| i * total / count).collect()
}

/// Update ticks `phase, phase + n, ...` for `phases` evenly spread phase
/// offsets in `0..n`.
pub fn upper_sequences(t_len: usize, horizon: usize, phases: usize) -> Vec<Vec<usize>> {
    let phases = phases.clamp(1, horizon);
    (0..phases)
        .map(|i| (i * horizon / phases..t_len).step_by(horizon).collect())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect()
}

fn normalized_follower(demo: &Demonstration, norm: &NormStats) -> Result<Vec<Vec<f64>>> {
    demo.follower.states().iter().map(|s| norm.normalize_state(s)).collect()
}

fn normalized_leader(demo: &Demonstration, norm: &NormStats) -> Result<Vec<Vec<f64>>> {
    demo.leader.states().iter().map(|s| norm.normalize_state(s)).collect()
}

/// Sizes of a recurrent predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpperShape {
    pub hidden: usize,
    pub layers: usize,
    /// Number of phase-shifted copies of the demonstration used as training
    /// sequences.
    pub phases: usize,
}

impl Default for UpperShape {
    fn default() -> Self {
        UpperShape {
            hidden: 32,
            layers: 2,
            phases: 20,
        }
    }
}

fn window_samples(
    demo: &Demonstration,
    norm: &NormStats,
    horizon: usize,
    shape: &UpperShape,
) -> Result<Vec<SequenceSample>> {
    let f = normalized_follower(demo, norm)?;
    let last = f.len() - 1;
    let targets = |k: usize| -> Vec<f64> {
        (1..=2 * horizon)
            .flat_map(|i| f[(k + i).min(last)].iter().copied())
            .collect()
    };
    Ok(upper_sequences(f.len(), horizon, shape.phases)
        .into_iter()
        .map(|ticks| SequenceSample {
            inputs: ticks.iter().map(|&k| f[k].clone()).collect(),
            targets: ticks.iter().map(|&k| targets(k)).collect(),
        })
        .collect())
}

/// Upper layer of the sampling-based controller: predicts the follower
/// window used as the fusion reference.
pub fn train_sampling_upper(
    demo: &Demonstration,
    norm: &NormStats,
    horizon: usize,
    shape: &UpperShape,
    cfg: &TrainConfig,
) -> Result<(UpperModel, Vec<f64>)> {
    let d = norm.dim();
    let samples = window_samples(demo, norm, horizon, shape)?;
    let mut lstm = Lstm::new(d, shape.hidden, shape.layers, 2 * horizon * d, cfg.seed)?;
    let history = fit_lstm(&mut lstm, &samples, cfg)?;
    Ok((
        UpperModel::new(lstm, UpperHead::Window, horizon, norm.clone(), Vec::new())?,
        history,
    ))
}

/// Baseline hierarchical model: an upper predicting the same follower window
/// as the sampling upper, and a single lower trained on the whole task
/// against the follower state `horizon` ticks ahead.
pub fn train_baseline(
    demo: &Demonstration,
    norm: &NormStats,
    horizon: usize,
    shape: &UpperShape,
    lower_hidden: &[usize],
    jitter: &InputJitter,
    upper_cfg: &TrainConfig,
    lower_cfg: &TrainConfig,
) -> Result<(UpperModel, Mlp, Vec<f64>, Vec<f64>)> {
    let d = norm.dim();
    let samples = window_samples(demo, norm, horizon, shape)?;
    let mut lstm = Lstm::new(d, shape.hidden, shape.layers, 2 * horizon * d, upper_cfg.seed)?;
    let upper_hist = fit_lstm(&mut lstm, &samples, upper_cfg)?;

    let f = normalized_follower(demo, norm)?;
    let l = normalized_leader(demo, norm)?;
    let last = f.len() - 1;
    let mut xs: Vec<Vec<f64>> = (0..last)
        .map(|k| lower_input(&f[k], &f[(k + horizon).min(last)]))
        .collect();
    let mut ys: Vec<Vec<f64>> = (0..last).map(|k| l[k + 1].clone()).collect();
    jitter.validate()?;
    jitter.augment(&mut xs, &mut ys, d, lower_cfg.seed)?;
    let mut sizes = vec![2 * d];
    sizes.extend_from_slice(lower_hidden);
    sizes.push(d);
    let mut lower = Mlp::new(&sizes, lower_cfg.seed)?;
    let lower_hist = fit_mlp(&mut lower, &xs, &ys, lower_cfg)?;
    Ok((
        UpperModel::new(lstm, UpperHead::Window, horizon, norm.clone(), Vec::new())?,
        lower,
        upper_hist,
        lower_hist,
    ))
}

/// Loss of one upper update of the proportion model, and its gradient with
/// respect to the upper output. `ticks` are the control ticks that use this
/// update.
pub(crate) fn proportion_step_loss(
    bank: &LowerBank,
    y: &[f64],
    dy: &mut [f64],
    target_ref: &[f64],
    ticks: &[(Vec<f64>, Vec<f64>)],
) -> f64 {
    let d = bank.state_dim();
    let p = bank.len();
    let (f_hat, logits) = y.split_at(d);
    let (df_hat, dlogits) = dy.split_at_mut(d);
    let mut loss = mse(f_hat, target_ref, df_hat);
    if ticks.is_empty() {
        dlogits.iter_mut().for_each(|g| *g = 0.0);
        return loss;
    }
    let w = softmax(logits).expect("finite logits").weights().to_vec();
    let scale = 1.0 / ticks.len() as f64;
    let mut dw_total = vec![0.0; p];
    let mut dl = vec![0.0; d];
    for (follower, leader_next) in ticks {
        let x = lower_input(follower, f_hat);
        let acts: Vec<Vec<Vec<f64>>> = bank.primitives.iter().map(|m| m.activations(&x)).collect();
        let mut mixed = vec![0.0; d];
        for (wp, a) in w.iter().zip(&acts) {
            for (m, o) in mixed.iter_mut().zip(a.last().unwrap()) {
                *m += wp * o;
            }
        }
        loss += scale * mse(&mixed, leader_next, &mut dl);
        dl.iter_mut().for_each(|g| *g *= scale);
        for (q, a) in acts.iter().enumerate() {
            let out = a.last().unwrap();
            dw_total[q] += dl.iter().zip(out).map(|(g, o)| g * o).sum::<f64>();
            let scaled: Vec<f64> = dl.iter().map(|g| g * w[q]).collect();
            let dx = bank.primitives[q].backward_cached(a, &scaled, None);
            for (g, v) in df_hat.iter_mut().zip(&dx[d..]) {
                *g += v;
            }
        }
    }
    let mean_dw: f64 = w.iter().zip(&dw_total).map(|(a, b)| a * b).sum();
    for ((g, wq), dwq) in dlogits.iter_mut().zip(&w).zip(&dw_total) {
        *g = wq * (dwq - mean_dw);
    }
    loss
}

/// Upper layer of the learning-based controller, trained through the frozen
/// primitives in `bank`. Every `mix_stride`-th tick of each update block
/// contributes a mixed-command error; the predicted follower target adds its
/// own squared error.
pub fn train_learning_upper(
    demo: &Demonstration,
    bank: &LowerBank,
    primitives: Vec<usize>,
    shape: &UpperShape,
    mix_stride: usize,
    cfg: &TrainConfig,
) -> Result<(UpperModel, Vec<f64>)> {
    let norm = &bank.norm;
    let horizon = bank.horizon;
    let d = norm.dim();
    let p = bank.len();
    check_len(p, primitives.len())?;
    let f = normalized_follower(demo, norm)?;
    let l = normalized_leader(demo, norm)?;
    let last = f.len() - 1;
    let stride = mix_stride.max(1);
    let sequences = upper_sequences(f.len(), horizon, shape.phases);
    let head = UpperHead::Proportions { primitives: p };
    let mut lstm = Lstm::new(d, shape.hidden, shape.layers, d + p, cfg.seed)?;
    let history = train_loop(&mut lstm, sequences.len(), cfg, |m, i, grad| {
        let ticks = &sequences[i];
        let inputs: Vec<Vec<f64>> = ticks.iter().map(|&k| f[k].clone()).collect();
        let k_scale = 1.0 / ticks.len() as f64;
        m.sequence_gradient(
            &inputs,
            |t, y, dy| {
                let k0 = ticks[t];
                let block: Vec<(Vec<f64>, Vec<f64>)> = (k0..(k0 + horizon).min(last))
                    .step_by(stride)
                    .map(|k| (f[k].clone(), l[k + 1].clone()))
                    .collect();
                let loss = proportion_step_loss(bank, y, dy, &f[(k0 + horizon).min(last)], &block);
                dy.iter_mut().for_each(|g| *g *= k_scale);
                loss * k_scale
            },
            grad,
        )
    })?;
    Ok((UpperModel::new(lstm, head, horizon, norm.clone(), primitives)?, history))
}
