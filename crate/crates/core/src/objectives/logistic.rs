use std::ops::Range;
use std::sync::Arc;

use super::{Dataset, GradResult};

/// Binary logistic regression. Parameters are `k` weights followed by a bias;
/// labels must be 0 or 1.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: Arc<Dataset>,
}

impl LogisticRegression {
    pub fn new(data: Arc<Dataset>) -> Self {
        LogisticRegression { data }
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim() + 1
    }

    fn logit(&self, x: &[f64], i: usize) -> f64 {
        let k = self.data.dim();
        let row = self.data.row(i);
        x[..k].iter().zip(row).map(|(w, a)| w * a).sum::<f64>() + x[k]
    }

    pub(super) fn loss(&self, x: &[f64], batch: &[usize]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|&i| {
                let z = self.logit(x, i);
                softplus(z) - self.data.label(i) * z
            })
            .sum();
        total / batch.len() as f64
    }

    pub(super) fn grad(&self, x: &[f64], block: Range<usize>, batch: &[usize]) -> GradResult {
        let k = self.data.dim();
        let mut g = vec![0.0; block.len()];
        for &i in batch {
            let residual = sigmoid(self.logit(x, i)) - self.data.label(i);
            let row = self.data.row(i);
            for (acc, e) in g.iter_mut().zip(block.clone()) {
                let feature = if e < k { row[e] } else { 1.0 };
                *acc += residual * feature;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        g.iter_mut().for_each(|v| *v *= scale);
        let forward = (batch.len() * k) as u64;
        let backward = (batch.len() * block.len()) as u64;
        GradResult {
            values: g,
            flops: forward + backward,
            backward_flops: backward,
            batch_ids: batch.to_vec(),
        }
    }

    /// Fraction of samples classified correctly at threshold 0.5.
    pub fn accuracy(&self, x: &[f64]) -> f64 {
        let correct = (0..self.data.len())
            .filter(|&i| (self.logit(x, i) > 0.0) == (self.data.label(i) > 0.5))
            .count();
        correct as f64 / self.data.len() as f64
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
