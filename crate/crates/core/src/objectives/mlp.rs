//! Fully-connected network: tanh hidden layers, softmax cross-entropy head.
//!
//! Parameters are laid out layer by layer from the input side; each layer is
//! its row-major `outputs x inputs` weight matrix followed by its bias.
//! Gradients with respect to a layer-aligned block are computed by running
//! the backward pass from the output layer and stopping after the deepest
//! layer of the block. Every layer step of the backward pass produces both
//! the weight gradient and the input gradient.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, GradResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weights(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn params(&self) -> usize {
        self.weights() + self.outputs
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.params()
    }

    /// Multiply-adds of one sample's forward product.
    pub fn matmul_cost(&self) -> u64 {
        self.weights() as u64
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    data: Arc<Dataset>,
    layers: Vec<LayerShape>,
}

impl Mlp {
    /// `hidden` lists hidden widths; input width and class count come from
    /// the dataset.
    pub fn new(data: Arc<Dataset>, hidden: &[usize]) -> Result<Self> {
        let classes = data.num_classes();
        if classes < 2 {
            return Err(Error::Dataset("mlp needs at least two classes".into()));
        }
        Self::with_widths(data, hidden, classes)
    }

    /// Explicit output width, which may exceed the number of classes present.
    pub fn with_widths(data: Arc<Dataset>, hidden: &[usize], outputs: usize) -> Result<Self> {
        if hidden.iter().any(|&w| w == 0) {
            return Err(Error::Dataset("hidden widths must be positive".into()));
        }
        if data.num_classes() > outputs {
            return Err(Error::Dataset(format!(
                "{} classes do not fit {outputs} outputs",
                data.num_classes()
            )));
        }
        let mut widths = vec![data.dim()];
        widths.extend_from_slice(hidden);
        widths.push(outputs);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            let layer = LayerShape {
                inputs: w[0],
                outputs: w[1],
                offset,
            };
            offset += layer.params();
            layers.push(layer);
        }
        Ok(Mlp { data, layers })
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.offset + l.params())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.dim()];
        for layer in &self.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for v in &mut x[layer.offset..layer.offset + layer.weights()] {
                *v = rng.gen_range(-limit..limit);
            }
        }
        x
    }

    /// Layers `lo..=hi` covered exactly by `block`.
    pub fn block_layers(&self, block: &Range<usize>) -> Result<(usize, usize)> {
        let lo = self.layers.iter().position(|l| l.offset == block.start);
        let hi = self
            .layers
            .iter()
            .position(|l| l.offset + l.params() == block.end);
        match (lo, hi) {
            (Some(lo), Some(hi)) if lo <= hi => Ok((lo, hi)),
            _ => Err(Error::Block(format!(
                "block {block:?} is not aligned with layer boundaries"
            ))),
        }
    }

    pub fn forward_cost(&self) -> u64 {
        self.layers.iter().map(LayerShape::matmul_cost).sum()
    }

    /// Per-sample backward multiply-adds to reach layer `lo`.
    pub fn backward_cost_to(&self, lo: usize) -> u64 {
        self.layers[lo..].iter().map(|l| 2 * l.matmul_cost()).sum()
    }

    fn forward(&self, x: &[f64], input: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.clear();
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &x[layer.offset..layer.offset + layer.weights()];
            let b = &x[layer.offset + layer.weights()..layer.offset + layer.params()];
            let a = &acts[l];
            let mut z: Vec<f64> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
                *zo += row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
            if l == last {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
    }

    pub(super) fn loss(&self, x: &[f64], batch: &[usize]) -> f64 {
        let mut acts = Vec::new();
        let total: f64 = batch
            .iter()
            .map(|&i| {
                self.forward(x, self.data.row(i), &mut acts);
                let p = acts.last().unwrap()[self.data.label(i) as usize];
                -p.max(f64::MIN_POSITIVE).ln()
            })
            .sum();
        total / batch.len() as f64
    }

    pub(super) fn grad(
        &self,
        x: &[f64],
        block: Range<usize>,
        batch: &[usize],
    ) -> Result<GradResult> {
        let (lo, hi) = self.block_layers(&block)?;
        let mut g = vec![0.0; block.len()];
        let mut acts = Vec::new();
        let mut scratch = Vec::new();
        for &i in batch {
            self.forward(x, self.data.row(i), &mut acts);
            let mut delta = acts.last().unwrap().clone();
            delta[self.data.label(i) as usize] -= 1.0;
            for l in (lo..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let a_in = &acts[l];
                // Weight and bias gradient for this layer.
                let dw: &mut [f64] = if (lo..=hi).contains(&l) {
                    let start = layer.offset - block.start;
                    &mut g[start..start + layer.params()]
                } else {
                    scratch.clear();
                    scratch.resize(layer.params(), 0.0);
                    &mut scratch
                };
                for (o, &d) in delta.iter().enumerate() {
                    let row = &mut dw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (r, &a) in row.iter_mut().zip(a_in) {
                        *r += d * a;
                    }
                }
                for (bo, &d) in dw[layer.weights()..].iter_mut().zip(&delta) {
                    *bo += d;
                }
                // Input gradient W^T delta.
                let w = &x[layer.offset..layer.offset + layer.weights()];
                let mut dx = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (acc, &wi) in dx.iter_mut().zip(row) {
                        *acc += wi * d;
                    }
                }
                if l > lo {
                    for (v, &a) in dx.iter_mut().zip(a_in) {
                        *v *= 1.0 - a * a;
                    }
                    delta = dx;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        g.iter_mut().for_each(|v| *v *= scale);
        let n = batch.len() as u64;
        let backward = n * self.backward_cost_to(lo);
        Ok(GradResult {
            values: g,
            flops: n * self.forward_cost() + backward,
            backward_flops: backward,
            batch_ids: batch.to_vec(),
        })
    }

    /// Fraction of samples whose arg-max output equals the label.
    pub fn accuracy(&self, x: &[f64]) -> f64 {
        let mut acts = Vec::new();
        let correct = (0..self.data.len())
            .filter(|&i| {
                self.forward(x, self.data.row(i), &mut acts);
                let out = acts.last().unwrap();
                let best = out
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
                    .0;
                best == self.data.label(i) as usize
            })
            .count();
        correct as f64 / self.data.len() as f64
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}
