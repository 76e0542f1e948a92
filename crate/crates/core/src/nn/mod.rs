//! Small trainable networks with hand-written backpropagation.
//!
//! Every model stores all of its parameters in one flat `Vec<f64>` so that
//! the optimizer, the gradient checker and the file format can treat them
//! uniformly. Matrices are row-major `(rows x cols)` slices of that vector.

mod gradcheck;
mod lstm;
mod mlp;
mod train;

pub use gradcheck::{gradient_check, FD_STEP};
pub use lstm::{Lstm, LstmState};
pub use mlp::Mlp;
pub use train::{fit_lstm, fit_mlp, mse, train_loop, Adam, SequenceSample, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Models whose parameters live in one contiguous vector.
pub trait Parameterized {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }
}

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are reproducible bit for bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = W x (+ out if accumulate)` for row-major `W` of shape `(out.len(), x.len())`.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// `dx += W^T dy`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (i, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (x, r) in dx.iter_mut().zip(row) {
            *x += d * r;
        }
    }
}

/// `G += dy x^T`.
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut g[i * cols..(i + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += d * xv;
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fills `out` with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws.
pub(crate) fn init_uniform(rng: &mut ChaCha8Rng, fan_in: usize, out: &mut [f64]) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in out {
        *v = rng.random_range(-bound..=bound);
    }
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
