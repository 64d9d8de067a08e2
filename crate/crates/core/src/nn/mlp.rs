use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Output head applied on top of the final affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Single logit squashed to a probability.
    Logistic,
    /// Categorical distribution over the outputs.
    Softmax,
    /// Raw outputs.
    Linear,
}

/// Fully connected network with rectifier hidden layers.
///
/// Parameters live in one flat vector. Layer `l` contributes a row-major
/// `sizes[l] × sizes[l + 1]` weight block followed by its bias block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    head: Head,
    params: Vec<f64>,
}

#[derive(Clone, Debug)]
struct LayerSlices {
    w: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
    fan_in: usize,
    fan_out: usize,
}

fn layer_slices(sizes: &[usize]) -> Vec<LayerSlices> {
    let mut off = 0;
    sizes
        .windows(2)
        .map(|w| {
            let (i, o) = (w[0], w[1]);
            let s = LayerSlices {
                w: off..off + i * o,
                b: off + i * o..off + i * o + o,
                fan_in: i,
                fan_out: o,
            };
            off += i * o + o;
            s
        })
        .collect()
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// Input to each layer: `inputs[0]` is the batch, later entries are
    /// rectified hidden activations.
    inputs: Vec<Array2<f64>>,
    /// Final pre-activations, `batch × output_dim`.
    pub logits: Array2<f64>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_sizes(sizes: &[usize], head: Head) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if head == Head::Logistic && sizes[sizes.len() - 1] != 1 {
            return Err(Error::Config("a logistic head needs exactly one output".into()));
        }
        Ok(())
    }

    /// He-scaled uniform initialisation for hidden layers; the output layer
    /// starts at zero so a fresh network is neutral (p = 0.5, uniform policy,
    /// zero values).
    pub fn new(sizes: &[usize], head: Head, seed: u64) -> Result<Mlp> {
        Self::check_sizes(sizes, head)?;
        let mut rng = seed::rng(seed::derive_str(seed, "mlp-init"));
        let mut params = vec![0.0; Self::param_count(sizes)];
        let layers = layer_slices(sizes);
        let last = layers.len() - 1;
        for (l, layer) in layers.iter().enumerate() {
            if l == last {
                continue;
            }
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            for p in &mut params[layer.w.clone()] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            head,
            params,
        })
    }

    pub fn from_parts(sizes: Vec<usize>, head: Head, params: Vec<f64>) -> Result<Mlp> {
        Self::check_sizes(&sizes, head)?;
        if params.len() != Self::param_count(&sizes) {
            return Err(Error::Shape {
                expected: Self::param_count(&sizes),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Data("non-finite network parameter".into()));
        }
        Ok(Mlp { sizes, head, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Names the parameter block containing flat index `i`.
    pub fn block_name(&self, i: usize) -> String {
        for (l, s) in layer_slices(&self.sizes).iter().enumerate() {
            if s.w.contains(&i) {
                return format!("layer {l} weights");
            }
            if s.b.contains(&i) {
                return format!("layer {l} bias");
            }
        }
        format!("parameter {i}")
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn affine(&self, layer: &LayerSlices, x: &ArrayView2<f64>) -> Array2<f64> {
        let w = ArrayView2::from_shape((layer.fan_in, layer.fan_out), &self.params[layer.w.clone()])
            .expect("weight block shape");
        let b = ndarray::ArrayView1::from(&self.params[layer.b.clone()]);
        let mut z = x.dot(&w);
        z += &b;
        z
    }

    /// Final pre-activations for a batch (`batch × input_dim`).
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let layers = layer_slices(&self.sizes);
        let mut h = self.affine(&layers[0], &x);
        for layer in &layers[1..] {
            h.mapv_inplace(relu);
            h = self.affine(layer, &h.view());
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let layers = layer_slices(&self.sizes);
        let mut inputs = Vec::with_capacity(layers.len());
        inputs.push(x.to_owned());
        let mut h = self.affine(&layers[0], &x);
        for layer in &layers[1..] {
            h.mapv_inplace(relu);
            let next = self.affine(layer, &h.view());
            inputs.push(h);
            h = next;
        }
        Ok(ForwardCache { inputs, logits: h })
    }

    /// Gradient of a loss with respect to all parameters, given the gradient
    /// of that loss with respect to the final pre-activations.
    pub fn backward(&self, cache: &ForwardCache, d_logits: ArrayView2<f64>) -> Vec<f64> {
        let layers = layer_slices(&self.sizes);
        let mut grads = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = d_logits.to_owned();
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let input = &cache.inputs[l];
            let gw = input.t().dot(&delta);
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            // Logical (row-major) order, whatever the memory layout of `gw`.
            for (dst, v) in grads[layer.w.clone()].iter_mut().zip(gw.iter()) {
                *dst = *v;
            }
            for (dst, v) in grads[layer.b.clone()].iter_mut().zip(gb.iter()) {
                *dst = *v;
            }
            if l > 0 {
                let w = ArrayView2::from_shape((layer.fan_in, layer.fan_out), &self.params[layer.w.clone()])
                    .expect("weight block shape");
                let mut back = delta.dot(&w.t());
                ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads
    }

    /// Pre-activations for a single input vector.
    pub fn logits_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.logits(view)?.iter().copied().collect())
    }

    /// Probability of a logistic network, clamped to `[eps, 1 - eps]`.
    pub fn forward_prob(&self, x: &[f64], eps: f64) -> Result<f64> {
        let z = self.logits_one(x)?[0];
        Ok(clamp_prob(sigmoid(z), eps))
    }

    /// Categorical probabilities for a single input.
    pub fn probs_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits_one(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }
}

#[inline]
pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

pub fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("contiguous row"));
    }
    p
}

/// Collect rows `indices` of a row-major `source` matrix with `dim` columns.
pub fn gather_rows(source: &[f64], dim: usize, indices: &[usize]) -> Array2<f64> {
    let mut out = Vec::with_capacity(indices.len() * dim);
    for &i in indices {
        out.extend_from_slice(&source[i * dim..(i + 1) * dim]);
    }
    Array2::from_shape_vec((indices.len(), dim), out).expect("gathered shape")
}
