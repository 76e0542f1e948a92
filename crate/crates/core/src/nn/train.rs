use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Lstm, Mlp, Parameterized};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 16,
            epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(num_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Generic minibatch loop. `item_grad(model, i, grad)` adds the gradient of
/// item `i`'s loss into `grad` and returns that loss. Each minibatch step uses
/// the mean over its items. Returns the mean item loss of every epoch.
pub fn train_loop<M, F>(model: &mut M, n_items: usize, cfg: &TrainConfig, mut item_grad: F) -> Result<Vec<f64>>
where
    M: Parameterized,
    F: FnMut(&M, usize, &mut [f64]) -> Result<f64>,
{
    cfg.validate()?;
    if n_items == 0 {
        return Err(Error::NoData);
    }
    let n = model.num_params();
    let mut opt = Adam::new(n, cfg.learning_rate);
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut grad = vec![0.0; n];
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let loss = item_grad(model, i, &mut grad)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged);
                }
                total += loss;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged);
            }
            opt.step(model.params_mut(), &grad);
        }
        history.push(total / n_items as f64);
    }
    Ok(history)
}

/// Squared error averaged over components; writes its gradient into `dy`.
pub fn mse(y: &[f64], target: &[f64], dy: &mut [f64]) -> f64 {
    let k = 1.0 / y.len() as f64;
    let mut loss = 0.0;
    for ((d, a), b) in dy.iter_mut().zip(y).zip(target) {
        let e = a - b;
        loss += e * e * k;
        *d = 2.0 * e * k;
    }
    loss
}

/// Fits an MLP to `(inputs[i], targets[i])` pairs under MSE.
pub fn fit_mlp(model: &mut Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>], cfg: &TrainConfig) -> Result<Vec<f64>> {
    check_len(inputs.len(), targets.len())?;
    for (x, y) in inputs.iter().zip(targets) {
        check_len(model.input_dim(), x.len())?;
        check_len(model.output_dim(), y.len())?;
    }
    let mut dy = vec![0.0; model.output_dim()];
    train_loop(model, inputs.len(), cfg, |m, i, grad| {
        let acts = m.activations(&inputs[i]);
        let loss = mse(acts.last().unwrap(), &targets[i], &mut dy);
        m.backward_cached(&acts, &dy, Some(grad));
        Ok(loss)
    })
}

/// One training sequence: an input and a target per step.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

/// Fits an LSTM to sequences under MSE averaged over steps.
pub fn fit_lstm(model: &mut Lstm, samples: &[SequenceSample], cfg: &TrainConfig) -> Result<Vec<f64>> {
    for s in samples {
        check_len(s.inputs.len(), s.targets.len())?;
        if s.inputs.is_empty() {
            return Err(Error::NoData);
        }
        for (x, y) in s.inputs.iter().zip(&s.targets) {
            check_len(model.input_size(), x.len())?;
            check_len(model.output_size(), y.len())?;
        }
    }
    train_loop(model, samples.len(), cfg, |m, i, grad| {
        let s = &samples[i];
        let k = 1.0 / s.inputs.len() as f64;
        m.sequence_gradient(
            &s.inputs,
            |t, y, dy| {
                let l = mse(y, &s.targets[t], dy);
                dy.iter_mut().for_each(|d| *d *= k);
                l * k
            },
            grad,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_pairs_converge_monotonically() {
        let mut m = Mlp::new(&[3, 8, 2], 1).unwrap();
        let x = vec![vec![0.3, -0.2, 0.8]; 64];
        let y = vec![vec![0.5, -0.4]; 64];
        let cfg = TrainConfig {
            epochs: 2000,
            ..TrainConfig::default()
        };
        let h = fit_mlp(&mut m, &x, &y, &cfg).unwrap();
        let hit = h.iter().position(|&l| l < 1e-6).expect("never reached 1e-6");
        assert!(h[..=hit].windows(2).all(|w| w[1] < w[0]), "loss not monotone");
        assert!(h[hit..].iter().all(|&l| l < 1e-6));
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut m = Mlp::new(&[2, 4, 1], 3).unwrap();
        let before = m.clone();
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.1, 1.0]).collect();
        let y: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64).sin()]).collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..TrainConfig::default()
        };
        let h = fit_mlp(&mut m, &x, &y, &cfg).unwrap();
        assert_eq!(m, before);
        assert!(h.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
    }

    #[test]
    fn recovers_linear_operator() {
        let a = [[0.5, -1.0, 0.25], [2.0, 0.0, -0.75]];
        let mut rng = seeded_rng(11);
        let xs: Vec<Vec<f64>> = (0..256)
            .map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect())
            .collect();
        let mut m = Mlp::new(&[3, 2], 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 300,
            ..TrainConfig::default()
        };
        fit_mlp(&mut m, &xs, &ys, &cfg).unwrap();
        let (w, b) = m.layer(0);
        for r in 0..2 {
            for c in 0..3 {
                assert!((w[r * 3 + c] - a[r][c]).abs() < 1e-3, "{:?}", w);
            }
            assert!(b[r].abs() < 1e-3);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).cos(), 0.5]).collect();
        let ys: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.3).sin()]).collect();
        let cfg = TrainConfig {
            epochs: 20,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut a = Mlp::new(&[2, 6, 1], 2).unwrap();
        let mut b = a.clone();
        let ha = fit_mlp(&mut a, &xs, &ys, &cfg).unwrap();
        let hb = fit_mlp(&mut b, &xs, &ys, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = Mlp::new(&[1, 1], 0).unwrap();
        let x = vec![vec![1.0]];
        let y = vec![vec![f64::INFINITY]];
        assert!(matches!(
            fit_mlp(&mut m, &x, &y, &TrainConfig::default()),
            Err(Error::TrainingDiverged)
        ));
    }

    #[test]
    fn lstm_learns_running_sum_sign() {
        let samples: Vec<SequenceSample> = (0..32)
            .map(|s| {
                let inputs: Vec<Vec<f64>> = (0..6).map(|t| vec![((s * 7 + t * 3) as f64).sin()]).collect();
                let mut acc = 0.0;
                let targets = inputs
                    .iter()
                    .map(|x| {
                        acc += x[0];
                        vec![0.5 * acc.tanh()]
                    })
                    .collect();
                SequenceSample { inputs, targets }
            })
            .collect();
        let mut m = Lstm::new(1, 8, 1, 1, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 150,
            seed: 1,
        };
        let h = fit_lstm(&mut m, &samples, &cfg).unwrap();
        assert!(h.last().unwrap() < &(0.1 * h[0]), "{} -> {}", h[0], h.last().unwrap());
    }
}
