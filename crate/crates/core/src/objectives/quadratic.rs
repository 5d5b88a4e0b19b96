use std::ops::Range;
use std::sync::Arc;

use super::{Dataset, GradResult};

/// `f(x) = mean_i ½‖x − c_i‖²` with the dataset rows as targets `c_i`.
/// The minimizer is the row mean.
#[derive(Debug, Clone)]
pub struct Quadratic {
    data: Arc<Dataset>,
}

impl Quadratic {
    pub fn new(data: Arc<Dataset>) -> Self {
        Quadratic { data }
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn minimizer(&self) -> Vec<f64> {
        let n = self.data.len() as f64;
        let mut c = vec![0.0; self.dim()];
        for i in 0..self.data.len() {
            for (acc, v) in c.iter_mut().zip(self.data.row(i)) {
                *acc += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    pub(super) fn loss(&self, x: &[f64], batch: &[usize]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|&i| {
                0.5 * x
                    .iter()
                    .zip(self.data.row(i))
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
            })
            .sum();
        total / batch.len() as f64
    }

    pub(super) fn grad(&self, x: &[f64], block: Range<usize>, batch: &[usize]) -> GradResult {
        let mut g = vec![0.0; block.len()];
        for &i in batch {
            let row = &self.data.row(i)[block.clone()];
            for ((acc, a), c) in g.iter_mut().zip(&x[block.clone()]).zip(row) {
                *acc += a - c;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        g.iter_mut().for_each(|v| *v *= scale);
        let work = (batch.len() * block.len()) as u64;
        GradResult {
            values: g,
            flops: work,
            backward_flops: work,
            batch_ids: batch.to_vec(),
        }
    }
}
