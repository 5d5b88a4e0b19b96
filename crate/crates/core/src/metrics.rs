//! Metrics table rows, their CSV encoding and seed-aggregate summaries.
//!
//! Header: `algo,seed,wall_ms,samples,round,train_loss,grad_norm_sq,flops,p_hat`.
//! Floats are written in shortest round-trip form, so files parse back
//! bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::Algo;
use crate::error::{Error, Result};
use crate::stats::mean_std;

pub const HEADER: [&str; 9] = [
    "algo",
    "seed",
    "wall_ms",
    "samples",
    "round",
    "train_loss",
    "grad_norm_sq",
    "flops",
    "p_hat",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub algo: Algo,
    pub seed: u64,
    pub wall_ms: f64,
    /// Training samples processed so far, summed over workers.
    pub samples: u64,
    pub round: u64,
    pub train_loss: f64,
    pub grad_norm_sq: f64,
    pub flops: u64,
    pub p_hat: f64,
}

pub fn write_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, rows)
}

/// Reads a metrics table, rejecting files whose header differs from [`HEADER`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    read_csv(std::fs::File::open(path)?)
}

/// Whether `samples` never decreases along the table.
pub fn samples_monotone(rows: &[MetricsRow]) -> bool {
    rows.windows(2).all(|w| w[0].samples <= w[1].samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: Algo,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

const SUMMARY_METRICS: [&str; 5] = ["train_loss", "grad_norm_sq", "wall_ms", "flops", "p_hat"];

fn metric_value(row: &MetricsRow, metric: &str) -> f64 {
    match metric {
        "train_loss" => row.train_loss,
        "grad_norm_sq" => row.grad_norm_sq,
        "wall_ms" => row.wall_ms,
        "flops" => row.flops as f64,
        "p_hat" => row.p_hat,
        _ => unreachable!("unknown summary metric {metric}"),
    }
}

/// Mean ± std over seeds of each run's final row, grouped by algorithm in
/// first-seen order. `runs` holds one metrics table per (algo, seed).
pub fn summarize(runs: &[Vec<MetricsRow>]) -> Vec<SummaryRow> {
    let mut algos: Vec<Algo> = Vec::new();
    for run in runs {
        if let Some(last) = run.last() {
            if !algos.contains(&last.algo) {
                algos.push(last.algo);
            }
        }
    }
    let mut out = Vec::new();
    for algo in algos {
        let finals: Vec<&MetricsRow> = runs
            .iter()
            .filter_map(|r| r.last())
            .filter(|r| r.algo == algo)
            .collect();
        for metric in SUMMARY_METRICS {
            let values: Vec<f64> = finals.iter().map(|r| metric_value(r, metric)).collect();
            let (mean, std) = mean_std(&values);
            out.push(SummaryRow {
                algo,
                metric: metric.to_string(),
                n: values.len(),
                mean,
                std,
            });
        }
    }
    out
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["algo", "metric", "n", "mean", "std"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Plain-text table of a summary, one line per (algo, metric).
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!("{:<8} {:<13} {:>3} {:>14} {:>12}\n", "algo", "metric", "n", "mean", "std");
    for r in rows {
        s.push_str(&format!(
            "{:<8} {:<13} {:>3} {:>14.6e} {:>12.4e}\n",
            r.algo.as_str(),
            r.metric,
            r.n,
            r.mean,
            r.std
        ));
    }
    s
}
