use rand::seq::index::sample;

use super::{seeded_rng, Parameterized};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Compares `analytic` (the full parameter gradient of `loss` at `model`)
/// with central differences on `probes` randomly chosen parameters, or all
/// of them if the model has fewer. Returns the largest
/// `|analytic - numeric| / max(1e-8, |numeric|)`.
pub fn gradient_check<M, F>(model: &M, mut loss: F, analytic: &[f64], probes: usize, seed: u64) -> f64
where
    M: Parameterized + Clone,
    F: FnMut(&M) -> f64,
{
    let n = model.num_params();
    assert_eq!(n, analytic.len(), "gradient length");
    let picks = sample(&mut seeded_rng(seed), n, probes.min(n));
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in picks {
        let p0 = model.params()[i];
        probe.params_mut()[i] = p0 + FD_STEP;
        let up = loss(&probe);
        probe.params_mut()[i] = p0 - FD_STEP;
        let down = loss(&probe);
        probe.params_mut()[i] = p0;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1e-8));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::train::mse;
    use crate::nn::{Lstm, Mlp};

    #[test]
    fn linear_model_quadratic_loss() {
        let m = Mlp::new(&[6, 9], 1).unwrap();
        let x = [1.1, -1.4, 0.9, 1.3, -0.8, 1.5];
        // Targets near the current output keep roundoff in the loss small.
        let t: Vec<f64> = m
            .forward(&x)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, y)| y + 0.05 * (i as f64 - 4.0))
            .collect();
        let loss = |m: &Mlp| {
            let mut dy = vec![0.0; 9];
            mse(&m.forward(&x).unwrap(), &t, &mut dy)
        };
        let mut dy = vec![0.0; 9];
        mse(&m.forward(&x).unwrap(), &t, &mut dy);
        let mut g = vec![0.0; m.num_params()];
        m.backward(&x, &dy, &mut g).unwrap();
        let err = gradient_check(&m, loss, &g, 60, 0);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn three_layer_tanh_mlp() {
        let m = Mlp::new(&[5, 12, 10, 4], 7).unwrap();
        let x = [0.7, -0.2, 0.4, -0.9, 0.1];
        let t = [0.3, -0.5, 1.0, 0.0];
        let loss = |m: &Mlp| {
            let mut dy = vec![0.0; 4];
            mse(&m.forward(&x).unwrap(), &t, &mut dy)
        };
        let mut dy = vec![0.0; 4];
        mse(&m.forward(&x).unwrap(), &t, &mut dy);
        let mut g = vec![0.0; m.num_params()];
        m.backward(&x, &dy, &mut g).unwrap();
        let err = gradient_check(&m, loss, &g, 80, 1);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn mlp_input_gradient() {
        let m = Mlp::new(&[4, 6, 3], 2).unwrap();
        let x = [0.2, -0.6, 0.5, 0.9];
        let dy = [1.0, -0.5, 0.25];
        let gx = m.input_gradient(&x, &dy).unwrap();
        for k in 0..4 {
            let f = |d: f64| {
                let mut xp = x;
                xp[k] += d;
                let y = m.forward(&xp).unwrap();
                y.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>()
            };
            let num = (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP);
            assert!((num - gx[k]).abs() < 1e-8);
        }
    }

    fn lstm_loss(m: &Lstm, xs: &[Vec<f64>], ts: &[Vec<f64>], grad: Option<&mut [f64]>) -> f64 {
        let mut scratch = vec![0.0; m.num_params()];
        let g = grad.unwrap_or(&mut scratch);
        m.sequence_gradient(xs, |t, y, dy| mse(y, &ts[t], dy), g).unwrap()
    }

    fn lstm_check(layers: usize, seed: u64) -> f64 {
        let m = Lstm::new(3, 5, layers, 2, seed).unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|t| vec![(t as f64).sin(), 0.5, -(t as f64) * 0.2]).collect();
        let ts: Vec<Vec<f64>> = (0..5).map(|t| vec![0.1 * t as f64, -0.3]).collect();
        let mut g = vec![0.0; m.num_params()];
        lstm_loss(&m, &xs, &ts, Some(&mut g));
        gradient_check(&m, |m| lstm_loss(m, &xs, &ts, None), &g, 80, seed)
    }

    #[test]
    fn single_layer_lstm_sequence() {
        let err = lstm_check(1, 3);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn stacked_lstm_sequence() {
        let err = lstm_check(2, 4);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn sequence_loss_matches_forward_run() {
        let m = Lstm::new(2, 3, 2, 1, 5).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|t| vec![t as f64 * 0.3, 1.0]).collect();
        let ys = m.run(&xs).unwrap();
        let mut g = vec![0.0; m.num_params()];
        let total = m
            .sequence_gradient(
                &xs,
                |_, y, dy| {
                    dy[0] = 1.0;
                    y[0]
                },
                &mut g,
            )
            .unwrap();
        let expected: f64 = ys.iter().map(|y| y[0]).sum();
        assert!((total - expected).abs() < 1e-14);
    }
}
