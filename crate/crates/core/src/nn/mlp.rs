use serde::{Deserialize, Serialize};

use super::{init_uniform, matvec_acc, matvec_t_acc, outer_acc, seeded_rng, Parameterized};
use crate::error::{check_len, Error, Result};
use crate::io::ArtifactMeta;

const FORMAT_TAG: &str = "primix-mlp/1";

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Parameter layout, layer by layer: weight matrix `(out x in)` row-major,
/// then bias `(out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpFile", into = "MlpFile")]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Zero-initialized network.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Seeded uniform(±1/sqrt(fan_in)) initialization of weights and biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut m = Self::zeros(sizes)?;
        let mut rng = seeded_rng(seed);
        let mut off = 0;
        for w in sizes.windows(2) {
            let n = w[0] * w[1] + w[1];
            init_uniform(&mut rng, w[0], &mut m.params[off..off + n]);
            off += n;
        }
        Ok(m)
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(&sizes)?;
        check_len(m.params.len(), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        m.params = params;
        Ok(m)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of the weight matrix of layer `l` (0-based affine layer index).
    fn offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    /// Weight matrix and bias of affine layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        (
            &self.params[off..off + i * o],
            &self.params[off + i * o..off + i * o + o],
        )
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in 0..self.num_layers() {
            a = self.affine(l, &a);
            if l + 1 < self.num_layers() {
                a.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        a
    }

    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let mut out = b.to_vec();
        matvec_acc(w, x, &mut out);
        out
    }

    /// Activations of every layer, input first and output last.
    pub(crate) fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let mut a = self.affine(l, &acts[l]);
            if l + 1 < self.num_layers() {
                a.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(a);
        }
        acts
    }

    /// Backpropagates `dy = dLoss/dOutput` through cached activations,
    /// accumulating parameter gradients into `grad` when given. Returns
    /// `dLoss/dInput`.
    pub(crate) fn backward_cached(&self, acts: &[Vec<f64>], dy: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let mut delta = dy.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            if let Some(g) = grad.as_deref_mut() {
                outer_acc(&mut g[off..off + i * o], &delta, &acts[l]);
                for (gb, d) in g[off + i * o..off + i * o + o].iter_mut().zip(&delta) {
                    *gb += d;
                }
            }
            let mut dx = vec![0.0; i];
            matvec_t_acc(&self.params[off..off + i * o], &delta, &mut dx);
            if l > 0 {
                for (d, a) in dx.iter_mut().zip(&acts[l]) {
                    *d *= 1.0 - a * a;
                }
            }
            delta = dx;
        }
        delta
    }

    /// Gradient of a loss with respect to parameters (accumulated into
    /// `grad`) and input (returned), given `dy` at the output for input `x`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        check_len(self.output_dim(), dy.len())?;
        check_len(self.params.len(), grad.len())?;
        let acts = self.activations(x);
        Ok(self.backward_cached(&acts, dy, Some(grad)))
    }

    /// Input gradient only; parameters are treated as frozen.
    pub fn input_gradient(&self, x: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        check_len(self.output_dim(), dy.len())?;
        let acts = self.activations(x);
        Ok(self.backward_cached(&acts, dy, None))
    }

    pub fn to_json(&self, meta: Option<&ArtifactMeta>) -> Result<String> {
        let mut file = MlpFile::from(self.clone());
        file.meta = meta.cloned();
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

#[derive(Serialize, Deserialize)]
struct MlpFile {
    format: String,
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ArtifactMeta>,
}

impl From<Mlp> for MlpFile {
    fn from(m: Mlp) -> Self {
        MlpFile {
            format: FORMAT_TAG.into(),
            layer_sizes: m.sizes,
            params: m.params,
            meta: None,
        }
    }
}

impl TryFrom<MlpFile> for Mlp {
    type Error = Error;

    fn try_from(f: MlpFile) -> Result<Self> {
        if f.format != FORMAT_TAG {
            return Err(Error::format("mlp file", format!("unknown format tag {:?}", f.format)));
        }
        Mlp::from_parts(f.layer_sizes, f.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[4, 8, 3]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut params = vec![0.0; 3 * 3 + 3];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let m = Mlp::from_parts(vec![3, 3], params).unwrap();
        assert_eq!(m.forward(&[0.1, -0.7, 2.5]).unwrap(), vec![0.1, -0.7, 2.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = Mlp::new(&[2, 3, 1], 0).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::from_parts(vec![2, 2], vec![0.0; 3]).is_err());
    }

    /// Straight-line re-implementation: explicit nested loops, no helpers.
    fn reference_forward(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut z = vec![0.0; n_out];
            for r in 0..n_out {
                let mut s = params[off + n_in * n_out + r];
                for c in 0..n_in {
                    s += params[off + r * n_in + c] * a[c];
                }
                z[r] = if l + 1 < layers { s.tanh() } else { s };
            }
            off += n_in * n_out + n_out;
            a = z;
        }
        a
    }

    #[test]
    fn matches_reference_implementation() {
        let sizes = [5, 7, 6, 3];
        for seed in 0..20 {
            let m = Mlp::new(&sizes, seed).unwrap();
            let x: Vec<f64> = (0..5).map(|i| (i as f64 * 0.37 + seed as f64).sin()).collect();
            let y = m.forward(&x).unwrap();
            let r = reference_forward(&sizes, m.params(), &x);
            for (a, b) in y.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let m = Mlp::new(&[16, 4], 9).unwrap();
        assert!(m.params().iter().all(|p| p.abs() <= 0.25));
        assert_eq!(m, Mlp::new(&[16, 4], 9).unwrap());
        assert_ne!(m, Mlp::new(&[16, 4], 10).unwrap());
    }

    #[test]
    fn rejects_foreign_format() {
        let text = r#"{"format":"other","layer_sizes":[1,1],"params":[0.0,0.0]}"#;
        assert!(Mlp::from_json(text).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(seed in 0u64..1000, scale in 1e-300f64..1e300) {
            let mut m = Mlp::new(&[3, 4, 2], seed).unwrap();
            m.params_mut().iter_mut().for_each(|p| *p *= scale);
            let back = Mlp::from_json(&m.to_json(None).unwrap()).unwrap();
            for (a, b) in back.params().iter().zip(m.params()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
