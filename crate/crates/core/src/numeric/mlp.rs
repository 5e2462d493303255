//! Fully connected networks evaluated over batches of samples.

use rand::Rng;
use rayon::prelude::*;

use super::ops::Activation;
use super::param::ParamBlock;
use crate::error::{Error, Result};
use crate::real::Real;

/// Samples per work item in the parallel backward pass. Fixed so the
/// reduction order never depends on the thread count.
const CHUNK: usize = 32;

/// Stack of affine layers. Each layer lives in one [`ParamBlock`] of shape
/// `[out, in + 1]`; the last column holds the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<ParamBlock<T>>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Per-layer activations recorded by [`Mlp::forward_batch`].
#[derive(Clone, Debug)]
pub struct MlpTrace<T> {
    pub n: usize,
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<T>>,
    pub pre: Vec<Vec<T>>,
}

impl<T> MlpTrace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("trace has at least the input")
    }
}

/// Gradient buffers mirroring an [`Mlp`]'s layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrad<T>(pub Vec<Vec<T>>);

impl<T: Real> MlpGrad<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self(mlp.layers.iter().map(|l| vec![T::zero(); l.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}

impl<T: Real> Mlp<T> {
    /// Xavier-uniform weights, zero biases. With `zero_last` the final layer
    /// starts at exactly zero so the network initially outputs `output(0)`.
    pub fn new<R: Rng>(
        prefix: &str,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        zero_last: bool,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let count = dims.len() - 1;
        let layers = (0..count)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let mut block = ParamBlock::zeros(format!("{prefix}/layer{i}"), vec![fan_out, fan_in + 1]);
                if !(zero_last && i + 1 == count) {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for o in 0..fan_out {
                        for c in 0..fan_in {
                            block.values[o * (fan_in + 1) + c] = T::lit(rng.gen_range(-bound..bound));
                        }
                    }
                }
                block
            })
            .collect();
        Self { layers, hidden, output }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].shape[1] - 1
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().shape[0]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Evaluates `n` samples stored row-major in `x` (`n * in_dim` values).
    pub fn forward_batch(&self, x: &[T], n: usize) -> Result<MlpTrace<T>> {
        if x.len() != n * self.in_dim() {
            return Err(Error::Shape(format!(
                "{}: expected {} inputs per sample, got {} values for {n} samples",
                self.layers[0].name,
                self.in_dim(),
                x.len()
            )));
        }
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (out_d, stride) = (layer.shape[0], layer.shape[1]);
            let in_d = stride - 1;
            let act = self.activation_for(l);
            let input = acts.last().unwrap();
            let mut z = vec![T::zero(); n * out_d];
            for s in 0..n {
                let xi = &input[s * in_d..(s + 1) * in_d];
                for o in 0..out_d {
                    let row = &layer.values[o * stride..(o + 1) * stride];
                    let mut acc = row[in_d];
                    for c in 0..in_d {
                        acc += row[c] * xi[c];
                    }
                    z[s * out_d + o] = acc;
                }
            }
            let y = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            acts.push(y);
        }
        Ok(MlpTrace { n, acts, pre })
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_batch(x, 1)?.output().to_vec())
    }

    /// Back-propagates `dy` (`n * out_dim`) through a recorded trace.
    /// Returns the input gradient and the parameter gradients.
    pub fn backward_batch(&self, trace: &MlpTrace<T>, dy: &[T]) -> (Vec<T>, MlpGrad<T>) {
        let n = trace.n;
        let in_d = self.in_dim();
        let out_d = self.out_dim();
        assert_eq!(dy.len(), n * out_d);
        let chunks: Vec<(usize, usize)> = (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect();
        let partial: Vec<(Vec<T>, MlpGrad<T>)> =
            chunks.par_iter().map(|&(lo, hi)| self.backward_range(trace, dy, lo, hi)).collect();
        let mut dx = Vec::with_capacity(n * in_d);
        let mut grad = MlpGrad::zeros_like(self);
        for (d, g) in &partial {
            dx.extend_from_slice(d);
            grad.add_assign(g);
        }
        (dx, grad)
    }

    fn backward_range(&self, trace: &MlpTrace<T>, dy: &[T], lo: usize, hi: usize) -> (Vec<T>, MlpGrad<T>) {
        let mut grad = MlpGrad::zeros_like(self);
        let in_d = self.in_dim();
        let out_d = self.out_dim();
        let mut dx = vec![T::zero(); (hi - lo) * in_d];
        let mut upstream = Vec::new();
        let mut delta = Vec::new();
        let mut down = Vec::new();
        for s in lo..hi {
            upstream.clear();
            upstream.extend_from_slice(&dy[s * out_d..(s + 1) * out_d]);
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let (o_d, stride) = (layer.shape[0], layer.shape[1]);
                let i_d = stride - 1;
                let act = self.activation_for(l);
                let z = &trace.pre[l][s * o_d..(s + 1) * o_d];
                let y = &trace.acts[l + 1][s * o_d..(s + 1) * o_d];
                let x = &trace.acts[l][s * i_d..(s + 1) * i_d];
                delta.clear();
                delta.extend((0..o_d).map(|o| upstream[o] * act.derivative(z[o], y[o])));
                down.clear();
                down.resize(i_d, T::zero());
                let g = &mut grad.0[l];
                for o in 0..o_d {
                    let d = delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.values[o * stride..(o + 1) * stride];
                    let grow = &mut g[o * stride..(o + 1) * stride];
                    for c in 0..i_d {
                        grow[c] += d * x[c];
                        down[c] += row[c] * d;
                    }
                    grow[i_d] += d;
                }
                std::mem::swap(&mut upstream, &mut down);
            }
            dx[(s - lo) * in_d..(s - lo + 1) * in_d].copy_from_slice(&upstream);
        }
        (dx, grad)
    }

    pub fn accumulate(&mut self, grad: &MlpGrad<T>) {
        for (layer, g) in self.layers.iter_mut().zip(&grad.0) {
            layer.accumulate(g);
        }
    }

    /// Flattened parameter values, layer after layer.
    pub fn flat_values(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.values.iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, flat: &[T]) {
        let mut at = 0;
        for layer in &mut self.layers {
            let n = layer.len();
            layer.values.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }
}
