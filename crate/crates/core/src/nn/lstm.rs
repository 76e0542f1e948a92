use serde::{Deserialize, Serialize};

use super::{init_uniform, matvec_acc, matvec_t_acc, outer_acc, seeded_rng, sigmoid, Parameterized};
use crate::error::{check_len, Error, Result};
use crate::io::ArtifactMeta;

const FORMAT_TAG: &str = "primix-lstm/1";

/// Stacked LSTM with a linear output head.
///
/// Gate order inside every `4H` block is `[input, forget, candidate, output]`.
/// Parameter layout, per layer: input weights `(4H x in)`, recurrent weights
/// `(4H x H)`, bias `(4H)`; then the head weights `(out x H)` and bias `(out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LstmFile", into = "LstmFile")]
pub struct Lstm {
    input_size: usize,
    hidden_size: usize,
    num_layers: usize,
    output_size: usize,
    params: Vec<f64>,
}

/// Per-layer hidden and cell vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(num_layers: usize, hidden_size: usize) -> Self {
        LstmState {
            h: vec![vec![0.0; hidden_size]; num_layers],
            c: vec![vec![0.0; hidden_size]; num_layers],
        }
    }
}

/// Values kept from the forward pass of one layer at one step.
struct Cache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, `4H`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn zeros(input_size: usize, hidden_size: usize, num_layers: usize, output_size: usize) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 || num_layers == 0 || output_size == 0 {
            return Err(Error::invalid("lstm sizes must be positive"));
        }
        let mut n = 0;
        for l in 0..num_layers {
            let inp = if l == 0 { input_size } else { hidden_size };
            n += 4 * hidden_size * (inp + hidden_size + 1);
        }
        n += output_size * (hidden_size + 1);
        Ok(Lstm {
            input_size,
            hidden_size,
            num_layers,
            output_size,
            params: vec![0.0; n],
        })
    }

    /// Seeded uniform(±1/sqrt(fan_in)) initialization.
    pub fn new(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        output_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut m = Self::zeros(input_size, hidden_size, num_layers, output_size)?;
        let mut rng = seeded_rng(seed);
        let h = hidden_size;
        for l in 0..num_layers {
            let (w, u, b) = m.layer_offsets(l);
            let fan_in = m.layer_input(l) + h;
            init_uniform(&mut rng, fan_in, &mut m.params[w..u]);
            init_uniform(&mut rng, fan_in, &mut m.params[u..b]);
            init_uniform(&mut rng, fan_in, &mut m.params[b..b + 4 * h]);
        }
        let head = m.head_offset();
        init_uniform(&mut rng, h, &mut m.params[head..]);
        Ok(m)
    }

    pub fn from_parts(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        output_size: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::zeros(input_size, hidden_size, num_layers, output_size)?;
        check_len(m.params.len(), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        m.params = params;
        Ok(m)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.num_layers, self.hidden_size)
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_size
        } else {
            self.hidden_size
        }
    }

    /// Offsets of (input weights, recurrent weights, bias) of layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize, usize) {
        let h = self.hidden_size;
        let mut off = 0;
        for k in 0..l {
            off += 4 * h * (self.layer_input(k) + h + 1);
        }
        let u = off + 4 * h * self.layer_input(l);
        (off, u, u + 4 * h * h)
    }

    fn head_offset(&self) -> usize {
        let (_, _, b) = self.layer_offsets(self.num_layers - 1);
        b + 4 * self.hidden_size
    }

    /// Mutable view of the bias block of layer `l` (`4H` entries, gate order
    /// input, forget, candidate, output).
    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (_, _, b) = self.layer_offsets(l);
        let h = self.hidden_size;
        &mut self.params[b..b + 4 * h]
    }

    /// Mutable view of the output head bias.
    pub fn head_bias_mut(&mut self) -> &mut [f64] {
        let start = self.head_offset() + self.output_size * self.hidden_size;
        &mut self.params[start..]
    }

    fn check_state(&self, state: &LstmState) -> Result<()> {
        check_len(self.num_layers, state.h.len())?;
        check_len(self.num_layers, state.c.len())?;
        for (h, c) in state.h.iter().zip(&state.c) {
            check_len(self.hidden_size, h.len())?;
            check_len(self.hidden_size, c.len())?;
        }
        Ok(())
    }

    fn cell(&self, l: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Cache) {
        let h = self.hidden_size;
        let (w, u, b) = self.layer_offsets(l);
        let mut z = self.params[b..b + 4 * h].to_vec();
        matvec_acc(&self.params[w..u], x, &mut z);
        matvec_acc(&self.params[u..b], h_prev, &mut z);
        for (k, v) in z.iter_mut().enumerate() {
            *v = if (2 * h..3 * h).contains(&k) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let mut c = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        for j in 0..h {
            c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
            tanh_c[j] = c[j].tanh();
            h_new[j] = z[3 * h + j] * tanh_c[j];
        }
        let cache = Cache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates: z,
            tanh_c,
        };
        (h_new, c, cache)
    }

    fn head(&self, h_top: &[f64]) -> Vec<f64> {
        let off = self.head_offset();
        let split = off + self.output_size * self.hidden_size;
        let mut y = self.params[split..].to_vec();
        matvec_acc(&self.params[off..split], h_top, &mut y);
        y
    }

    fn step_cached(&self, state: &LstmState, x: &[f64]) -> (Vec<f64>, LstmState, Vec<Cache>) {
        let mut next = LstmState {
            h: Vec::with_capacity(self.num_layers),
            c: Vec::with_capacity(self.num_layers),
        };
        let mut caches = Vec::with_capacity(self.num_layers);
        let mut inp = x.to_vec();
        for l in 0..self.num_layers {
            let (h, c, cache) = self.cell(l, &inp, &state.h[l], &state.c[l]);
            inp = h.clone();
            next.h.push(h);
            next.c.push(c);
            caches.push(cache);
        }
        (self.head(&inp), next, caches)
    }

    /// One time step: returns the head output and the successor state.
    pub fn step(&self, state: &LstmState, x: &[f64]) -> Result<(Vec<f64>, LstmState)> {
        check_len(self.input_size, x.len())?;
        self.check_state(state)?;
        let (y, next, _) = self.step_cached(state, x);
        Ok((y, next))
    }

    /// Runs a whole sequence from the zero state.
    pub fn run(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (y, s) = self.step(&state, x)?;
            state = s;
            out.push(y);
        }
        Ok(out)
    }

    /// Backpropagation through time over a sequence started from the zero
    /// state. `loss` receives `(t, y_t, dy_t)`, returns the step loss and
    /// writes `dLoss/dy_t`. Parameter gradients accumulate into `grad`;
    /// returns the summed loss.
    pub fn sequence_gradient<F>(&self, inputs: &[Vec<f64>], mut loss: F, grad: &mut [f64]) -> Result<f64>
    where
        F: FnMut(usize, &[f64], &mut [f64]) -> f64,
    {
        check_len(self.params.len(), grad.len())?;
        let (hs, n_layers, n_out) = (self.hidden_size, self.num_layers, self.output_size);
        let mut state = self.initial_state();
        let mut caches = Vec::with_capacity(inputs.len());
        let mut dys = Vec::with_capacity(inputs.len());
        let mut tops = Vec::with_capacity(inputs.len());
        let mut total = 0.0;
        for (t, x) in inputs.iter().enumerate() {
            check_len(self.input_size, x.len())?;
            let (y, next, cache) = self.step_cached(&state, x);
            let mut dy = vec![0.0; n_out];
            total += loss(t, &y, &mut dy);
            tops.push(next.h[n_layers - 1].clone());
            dys.push(dy);
            caches.push(cache);
            state = next;
        }

        let head = self.head_offset();
        let split = head + n_out * hs;
        let mut dh_next = vec![vec![0.0; hs]; n_layers];
        let mut dc_next = vec![vec![0.0; hs]; n_layers];
        for t in (0..inputs.len()).rev() {
            let dy = &dys[t];
            outer_acc(&mut grad[head..split], dy, &tops[t]);
            for (g, d) in grad[split..].iter_mut().zip(dy) {
                *g += d;
            }
            let mut dh_above = vec![0.0; hs];
            matvec_t_acc(&self.params[head..split], dy, &mut dh_above);

            for l in (0..n_layers).rev() {
                let c = &caches[t][l];
                let (w, u, b) = self.layer_offsets(l);
                let gates = &c.gates;
                let mut dz = vec![0.0; 4 * hs];
                for j in 0..hs {
                    let (i, f, g, o) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
                    let dh = dh_above[j] + dh_next[l][j];
                    let tc = c.tanh_c[j];
                    let dc = dc_next[l][j] + dh * o * (1.0 - tc * tc);
                    dz[j] = dc * g * i * (1.0 - i);
                    dz[hs + j] = dc * c.c_prev[j] * f * (1.0 - f);
                    dz[2 * hs + j] = dc * i * (1.0 - g * g);
                    dz[3 * hs + j] = dh * tc * o * (1.0 - o);
                    dc_next[l][j] = dc * f;
                }
                outer_acc(&mut grad[w..u], &dz, &c.x);
                outer_acc(&mut grad[u..b], &dz, &c.h_prev);
                for (g, d) in grad[b..b + 4 * hs].iter_mut().zip(&dz) {
                    *g += d;
                }
                let mut dh_prev = vec![0.0; hs];
                matvec_t_acc(&self.params[u..b], &dz, &mut dh_prev);
                dh_next[l] = dh_prev;
                let mut dx = vec![0.0; self.layer_input(l)];
                matvec_t_acc(&self.params[w..u], &dz, &mut dx);
                dh_above = dx;
            }
        }
        Ok(total)
    }

    pub fn to_json(&self, meta: Option<&ArtifactMeta>) -> Result<String> {
        let mut file = LstmFile::from(self.clone());
        file.meta = meta.cloned();
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl Parameterized for Lstm {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

#[derive(Serialize, Deserialize)]
struct LstmFile {
    format: String,
    input_size: usize,
    hidden_size: usize,
    num_layers: usize,
    output_size: usize,
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ArtifactMeta>,
}

impl From<Lstm> for LstmFile {
    fn from(m: Lstm) -> Self {
        LstmFile {
            format: FORMAT_TAG.into(),
            input_size: m.input_size,
            hidden_size: m.hidden_size,
            num_layers: m.num_layers,
            output_size: m.output_size,
            params: m.params,
            meta: None,
        }
    }
}

impl TryFrom<LstmFile> for Lstm {
    type Error = Error;

    fn try_from(f: LstmFile) -> Result<Self> {
        if f.format != FORMAT_TAG {
            return Err(Error::format("lstm file", format!("unknown format tag {:?}", f.format)));
        }
        Lstm::from_parts(f.input_size, f.hidden_size, f.num_layers, f.output_size, f.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_outputs_head_bias() {
        let mut m = Lstm::zeros(3, 4, 2, 2).unwrap();
        m.head_bias_mut().copy_from_slice(&[0.5, -1.5]);
        let (y, _) = m.step(&m.initial_state(), &[0.0; 3]).unwrap();
        assert_eq!(y, vec![0.5, -1.5]);
    }

    #[test]
    fn saturated_gates_hold_cell_state() {
        let mut m = Lstm::new(2, 3, 1, 1, 5).unwrap();
        let h = 3;
        {
            let b = m.bias_mut(0);
            b[..h].iter_mut().for_each(|v| *v = -20.0);
            b[h..2 * h].iter_mut().for_each(|v| *v = 20.0);
        }
        // Zero input and recurrent weights so the bias alone drives the gates.
        let (w, _, bias) = m.layer_offsets(0);
        m.params[w..bias].iter_mut().for_each(|v| *v = 0.0);
        let mut state = m.initial_state();
        state.c[0] = vec![0.7, -0.3, 1.2];
        let start = state.c[0].clone();
        for t in 0..50 {
            let x = [(t as f64).sin(), 1.0];
            state = m.step(&state, &x).unwrap().1;
        }
        for (a, b) in state.c[0].iter().zip(&start) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    /// Explicit two-unit cell written out gate by gate.
    #[test]
    fn matches_hand_written_two_unit_cell() {
        let m = Lstm::new(2, 2, 1, 1, 42).unwrap();
        let p = m.params();
        // Layout: W (8x2), U (8x2), b (8), head W (1x2), head b (1).
        let wx = |r: usize, c: usize| p[r * 2 + c];
        let wh = |r: usize, c: usize| p[16 + r * 2 + c];
        let b = |r: usize| p[32 + r];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = ([0.0f64; 2], [0.0f64; 2]);
        let xs = [[0.3, -0.1], [1.0, 0.5], [-0.7, 0.2], [0.0, 0.9]];
        let ys = m.run(&xs.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let pre = |r: usize| b(r) + wx(r, 0) * x[0] + wx(r, 1) * x[1] + wh(r, 0) * h[0] + wh(r, 1) * h[1];
            let i = [sig(pre(0)), sig(pre(1))];
            let f = [sig(pre(2)), sig(pre(3))];
            let g = [pre(4).tanh(), pre(5).tanh()];
            let o = [sig(pre(6)), sig(pre(7))];
            for j in 0..2 {
                c[j] = f[j] * c[j] + i[j] * g[j];
            }
            h = [o[0] * c[0].tanh(), o[1] * c[1].tanh()];
            let out = p[40] * h[0] + p[41] * h[1] + p[42];
            assert!((out - y[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_checks() {
        let m = Lstm::new(3, 4, 1, 2, 0).unwrap();
        assert!(m.step(&m.initial_state(), &[1.0]).is_err());
        assert!(m.step(&LstmState::zeros(2, 4), &[1.0; 3]).is_err());
        assert!(Lstm::zeros(0, 1, 1, 1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = Lstm::new(3, 4, 2, 2, 8).unwrap();
        let back = Lstm::from_json(&m.to_json(None).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
