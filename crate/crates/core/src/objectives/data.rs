//! In-memory datasets, CSV load/store and seeded synthetic generators.
//!
//! CSV schema: one row per sample, `f_1,...,f_k,label`, no header. Labels
//! are class indices for classification data and `0` for target vectors.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset("dataset has no samples".into()));
        }
        if dim == 0 {
            return Err(Error::Dataset("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Shape {
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        Ok(Dataset {
            features,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Number of classes assuming labels are `0..k`.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().fold(0.0f64, |m, &l| m.max(l)) as usize + 1
    }

    pub fn check_batch(&self, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Dataset("empty batch".into()));
        }
        if let Some(&index) = batch.iter().find(|&&i| i >= self.len()) {
            return Err(Error::SampleIndex {
                index,
                len: self.len(),
            });
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::Parse {
                    line: line + 1,
                    message: "expected at least one feature and a label".into(),
                });
            }
            let k = record.len() - 1;
            match dim {
                None => dim = Some(k),
                Some(d) if d != k => {
                    return Err(Error::Parse {
                        line: line + 1,
                        message: format!("expected {d} features, found {k}"),
                    })
                }
                _ => {}
            }
            for (col, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| Error::Parse {
                    line: line + 1,
                    message: format!("column {}: `{field}` is not a number", col + 1),
                })?;
                if col < k {
                    features.push(value);
                } else {
                    labels.push(value);
                }
            }
        }
        Dataset::new(features, labels, dim.unwrap_or(0))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for i in 0..self.len() {
            let mut fields: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            fields.push(self.label(i).to_string());
            wtr.write_record(&fields)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Seeded synthetic data generators.
#[derive(Debug, Clone, PartialEq)]
pub enum Synthetic {
    /// `classes` isotropic Gaussian clusters whose centers are drawn with
    /// standard deviation `separation`; samples have unit-scaled `spread`.
    GaussianBlobs {
        classes: usize,
        samples: usize,
        dim: usize,
        separation: f64,
        spread: f64,
    },
    /// Regression target vectors `c_i = c + noise * z_i` around a random
    /// center `c`, used as the per-sample targets of the quadratic objective.
    LinearTargets {
        samples: usize,
        dim: usize,
        noise: f64,
    },
}

impl Synthetic {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            Synthetic::GaussianBlobs {
                classes,
                samples,
                dim,
                separation,
                spread,
            } => {
                if classes < 2 || samples == 0 || dim == 0 {
                    return Err(Error::Dataset(format!(
                        "blobs need classes >= 2, samples >= 1, dim >= 1 \
                         (got {classes}, {samples}, {dim})"
                    )));
                }
                let centers: Vec<f64> = (0..classes * dim)
                    .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut features = Vec::with_capacity(samples * dim);
                let mut labels = Vec::with_capacity(samples);
                for i in 0..samples {
                    let class = i % classes;
                    for k in 0..dim {
                        let z: f64 = rng.sample(StandardNormal);
                        features.push(centers[class * dim + k] + spread * z);
                    }
                    labels.push(class as f64);
                }
                Dataset::new(features, labels, dim)
            }
            Synthetic::LinearTargets {
                samples,
                dim,
                noise,
            } => {
                if samples == 0 || dim == 0 {
                    return Err(Error::Dataset(format!(
                        "targets need samples >= 1 and dim >= 1 (got {samples}, {dim})"
                    )));
                }
                let center: Vec<f64> = (0..dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut features = Vec::with_capacity(samples * dim);
                for _ in 0..samples {
                    for c in &center {
                        let z: f64 = rng.sample(StandardNormal);
                        features.push(c + noise * z);
                    }
                }
                Dataset::new(features, vec![0.0; samples], dim)
            }
        }
    }
}
