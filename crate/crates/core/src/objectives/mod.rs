//! Differentiable objectives with block-restricted gradients.

mod data;
mod logistic;
mod mlp;
mod quadratic;
mod sampling;

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

pub use data::{Dataset, Synthetic};
pub use logistic::LogisticRegression;
pub use mlp::{LayerShape, Mlp};
pub use quadratic::Quadratic;
pub use sampling::{sample_batch, stream_seed, Sampler, SamplingMode};

use crate::error::{Error, Result};
use crate::partition::{balanced_boundaries, BlockPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Quadratic,
    LogisticRegression,
    Mlp,
}

/// Gradient of the mean batch loss restricted to one block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub values: Vec<f64>,
    /// Multiply-adds executed, forward and backward.
    pub flops: u64,
    /// The backward-pass share of `flops`.
    pub backward_flops: u64,
    pub batch_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum Objective {
    Quadratic(Quadratic),
    Logistic(LogisticRegression),
    Mlp(Mlp),
}

impl Objective {
    pub fn quadratic(data: Dataset) -> Self {
        Objective::Quadratic(Quadratic::new(Arc::new(data)))
    }

    pub fn logistic(data: Dataset) -> Result<Self> {
        if data.labels().iter().any(|&l| l != 0.0 && l != 1.0) {
            return Err(Error::Dataset(
                "logistic regression needs labels in {0, 1}".into(),
            ));
        }
        Ok(Objective::Logistic(LogisticRegression::new(Arc::new(data))))
    }

    pub fn mlp(data: Dataset, hidden: &[usize]) -> Result<Self> {
        Ok(Objective::Mlp(Mlp::new(Arc::new(data), hidden)?))
    }

    pub fn kind(&self) -> LossKind {
        match self {
            Objective::Quadratic(_) => LossKind::Quadratic,
            Objective::Logistic(_) => LossKind::LogisticRegression,
            Objective::Mlp(_) => LossKind::Mlp,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.dim(),
            Objective::Logistic(l) => l.dim(),
            Objective::Mlp(m) => m.dim(),
        }
    }

    pub fn dataset(&self) -> &Dataset {
        match self {
            Objective::Quadratic(q) => q.data(),
            Objective::Logistic(l) => l.data(),
            Objective::Mlp(m) => m.data(),
        }
    }

    pub fn num_samples(&self) -> usize {
        self.dataset().len()
    }

    /// Starting point: zeros for the convex objectives, seeded Glorot for mlp.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        match self {
            Objective::Mlp(m) => m.init_params(seed),
            _ => vec![0.0; self.dim()],
        }
    }

    /// Mean per-sample loss over `batch`.
    pub fn loss(&self, x: &[f64], batch: &[usize]) -> Result<f64> {
        self.check_point(x)?;
        self.dataset().check_batch(batch)?;
        Ok(match self {
            Objective::Quadratic(q) => q.loss(x, batch),
            Objective::Logistic(l) => l.loss(x, batch),
            Objective::Mlp(m) => m.loss(x, batch),
        })
    }

    /// Gradient of the mean batch loss at `x` restricted to `block`.
    pub fn grad_block(&self, x: &[f64], block: Range<usize>, batch: &[usize]) -> Result<GradResult> {
        self.check_point(x)?;
        self.dataset().check_batch(batch)?;
        if block.start >= block.end || block.end > self.dim() {
            return Err(Error::OutOfBounds {
                range: block,
                len: self.dim(),
            });
        }
        match self {
            Objective::Quadratic(q) => Ok(q.grad(x, block, batch)),
            Objective::Logistic(l) => Ok(l.grad(x, block, batch)),
            Objective::Mlp(m) => m.grad(x, block, batch),
        }
    }

    pub fn full_batch(&self) -> Vec<usize> {
        (0..self.num_samples()).collect()
    }

    pub fn full_loss(&self, x: &[f64]) -> Result<f64> {
        self.loss(x, &self.full_batch())
    }

    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.grad_block(x, 0..self.dim(), &self.full_batch())?.values)
    }

    pub fn accuracy(&self, x: &[f64]) -> Option<f64> {
        match self {
            Objective::Quadratic(_) => None,
            Objective::Logistic(l) => Some(l.accuracy(x)),
            Objective::Mlp(m) => Some(m.accuracy(x)),
        }
    }

    /// Parameter intervals of the model's layers, input side first. Vector
    /// objectives report a single layer.
    pub fn layer_ranges(&self) -> Vec<Range<usize>> {
        match self {
            Objective::Mlp(m) => m.layers().iter().map(LayerShape::range).collect(),
            _ => vec![0..self.dim()],
        }
    }

    /// Default `parts`-way partition: layer-aligned and cost-balanced for
    /// mlp, even element intervals otherwise.
    pub fn partition(&self, parts: usize) -> Result<BlockPartition> {
        match self {
            Objective::Mlp(m) => {
                let sizes: Vec<usize> = m.layers().iter().map(LayerShape::params).collect();
                let costs: Vec<u64> = m.layers().iter().map(|l| 2 * l.matmul_cost()).collect();
                BlockPartition::new(self.dim(), balanced_boundaries(&sizes, &costs, parts)?)
            }
            _ => BlockPartition::even(self.dim(), parts),
        }
    }

    /// Per-sample backward-pass cost of a gradient over `block` under the
    /// flop accounting used by [`Objective::grad_block`].
    pub fn backward_cost(&self, block: &Range<usize>) -> Result<u64> {
        match self {
            Objective::Mlp(m) => {
                let (lo, _) = m.block_layers(block)?;
                Ok(m.backward_cost_to(lo))
            }
            _ => Ok(block.len() as u64),
        }
    }

    /// `1 − Σ_i cost(block i) / (U · cost(full))` on backward-pass cost. For
    /// `U` layers of equal cost, one per block, this is `(U − 1) / (2U)`.
    pub fn flops_savings_ratio(&self, partition: &BlockPartition) -> Result<f64> {
        if !matches!(self, Objective::Mlp(_)) {
            return Err(Error::Unsupported(
                "flop savings are defined for layered (mlp) objectives".into(),
            ));
        }
        let full = self.backward_cost(&partition.block(0)?)? as f64;
        let mut partial = 0.0;
        for i in 1..=partition.parts() {
            partial += self.backward_cost(&partition.block(i)?)? as f64;
        }
        Ok(1.0 - partial / (partition.parts() as f64 * full))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Sampled(usize),
    /// The whole dataset, in index order.
    Full,
}

/// Empirical second-moment and variance bounds of the block gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBounds {
    /// `M̂ = sqrt(max E‖g̃_i‖²)`.
    pub m_hat: f64,
    /// `σ̂ = sqrt(max E‖g̃_i − ∇_i f‖²)`.
    pub sigma_hat: f64,
    pub second_moment_max: f64,
    pub variance_max: f64,
}

/// Monte-Carlo estimate of the bounds over `points` and `blocks`, each
/// expectation taken over `trials` minibatches.
pub fn estimate_moment_bounds<R: Rng + ?Sized>(
    obj: &Objective,
    points: &[Vec<f64>],
    blocks: &[Range<usize>],
    batch: BatchSize,
    trials: usize,
    rng: &mut R,
) -> Result<MomentBounds> {
    if trials < 30 {
        return Err(Error::config("trials", format!("need at least 30, got {trials}")));
    }
    let full_batch = obj.full_batch();
    let mut second_moment_max = 0.0f64;
    let mut variance_max = 0.0f64;
    for x in points {
        for block in blocks {
            let exact = obj.grad_block(x, block.clone(), &full_batch)?.values;
            let mut second = 0.0;
            let mut var = 0.0;
            for _ in 0..trials {
                let ids = match batch {
                    BatchSize::Sampled(size) => sample_batch(rng, obj.num_samples(), size),
                    BatchSize::Full => full_batch.clone(),
                };
                let g = obj.grad_block(x, block.clone(), &ids)?.values;
                second += g.iter().map(|v| v * v).sum::<f64>();
                var += g
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            second_moment_max = second_moment_max.max(second / trials as f64);
            variance_max = variance_max.max(var / trials as f64);
        }
    }
    Ok(MomentBounds {
        m_hat: second_moment_max.sqrt(),
        sigma_hat: variance_max.sqrt(),
        second_moment_max,
        variance_max,
    })
}
