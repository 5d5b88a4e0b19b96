use std::collections::HashMap;

use super::{DelayStats, MinorViews};
use crate::error::{Error, Result};
use crate::stats::{loglog_slope, mean_std, standard_error};

/// Good events below this count make a consistency row inconclusive.
pub const MIN_GOOD_EVENTS: usize = 100;

/// View-to-snapshot distances of one constant-rate run, restricted to
/// good delay events.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyStats {
    pub alpha: f64,
    pub dim: usize,
    pub k_bar: u64,
    pub m_hat: f64,
    pub good_distances: Vec<f64>,
    /// Updates with a distance but a bad (or no) classification.
    pub excluded: usize,
}

impl ConsistencyStats {
    /// `sqrt(d) * K_bar * M_hat`.
    pub fn b(&self) -> f64 {
        (self.dim as f64).sqrt() * self.k_bar as f64 * self.m_hat
    }

    /// `alpha^2 * B^2`.
    pub fn bound(&self) -> f64 {
        (self.alpha * self.b()).powi(2)
    }
}

/// Joins replayed distances with delay classifications. `alpha` is the
/// constant rate of the run.
pub fn consistency_stats(
    alpha: f64,
    views: &MinorViews,
    delay: &DelayStats,
    m_hat: f64,
) -> ConsistencyStats {
    let good: HashMap<(usize, u64), bool> = delay
        .events
        .iter()
        .map(|e| ((e.worker, e.update_order), e.good))
        .collect();
    let mut good_distances = Vec::new();
    let mut excluded = 0;
    for v in &views.distances {
        if good.get(&(v.worker, v.update_order)) == Some(&true) {
            good_distances.push(v.distance);
        } else {
            excluded += 1;
        }
    }
    ConsistencyStats {
        alpha,
        dim: views.final_views.first().map_or(0, Vec::len),
        k_bar: delay.k_bar,
        m_hat,
        good_distances,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub alpha: f64,
    pub good_events: usize,
    pub mean_distance: f64,
    pub mean_distance_se: f64,
    pub mean_distance_sq: f64,
    pub b: f64,
    pub bound: f64,
    pub under_bound: bool,
    pub under_bound_sq: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// Ascending in alpha.
    pub rows: Vec<ConsistencyRow>,
    /// Mean distance strictly increases with alpha.
    pub monotone: bool,
    /// Log-log slope of mean distance against alpha (positive alphas only).
    pub exponent: Option<f64>,
    /// Rates whose run had fewer than [`MIN_GOOD_EVENTS`] good events.
    pub insufficient: Vec<f64>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.insufficient.is_empty() && self.monotone && self.rows.iter().all(|r| r.under_bound)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(
            "alpha      good   mean|w-v|     se          mean|w-v|^2   alpha^2 B^2   under  under_sq\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10} {:<6} {:<13.5e} {:<11.3e} {:<13.5e} {:<13.5e} {:<6} {}\n",
                r.alpha,
                r.good_events,
                r.mean_distance,
                r.mean_distance_se,
                r.mean_distance_sq,
                r.bound,
                r.under_bound,
                r.under_bound_sq
            ));
        }
        s.push_str(&format!(
            "monotone: {}  exponent: {}\n",
            self.monotone,
            self.exponent.map_or("n/a".to_string(), |e| format!("{e:.4}"))
        ));
        if !self.insufficient.is_empty() {
            s.push_str(&format!(
                "insufficient data (< {MIN_GOOD_EVENTS} good events) at alpha {:?}\n",
                self.insufficient
            ));
        }
        s
    }
}

/// Compares the conditional mean distance per rate against `alpha^2 B^2`,
/// for both the plain and the squared norm. Needs at least three rates.
pub fn elastic_consistency_check(stats: &[ConsistencyStats]) -> Result<ConsistencyReport> {
    if stats.len() < 3 {
        return Err(Error::config(
            "alpha_grid",
            format!("need at least 3 rates, got {}", stats.len()),
        ));
    }
    let mut sorted: Vec<&ConsistencyStats> = stats.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let mut rows = Vec::new();
    let mut insufficient = Vec::new();
    for st in sorted {
        let n = st.good_distances.len();
        if st.alpha > 0.0 && n < MIN_GOOD_EVENTS {
            insufficient.push(st.alpha);
        }
        let (mean, _) = mean_std(&st.good_distances);
        let sq: Vec<f64> = st.good_distances.iter().map(|d| d * d).collect();
        let (mean_sq, _) = mean_std(&sq);
        let bound = st.bound();
        rows.push(ConsistencyRow {
            alpha: st.alpha,
            good_events: n,
            mean_distance: mean,
            mean_distance_se: if n > 1 { standard_error(&st.good_distances) } else { 0.0 },
            mean_distance_sq: mean_sq,
            b: st.b(),
            bound,
            under_bound: mean <= bound,
            under_bound_sq: mean_sq <= bound,
        });
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[0].mean_distance < w[1].mean_distance);
    let positive: Vec<&ConsistencyRow> = rows
        .iter()
        .filter(|r| r.alpha > 0.0 && r.mean_distance > 0.0)
        .collect();
    let exponent = loglog_slope(
        &positive.iter().map(|r| r.alpha).collect::<Vec<_>>(),
        &positive.iter().map(|r| r.mean_distance).collect::<Vec<_>>(),
    )
    .map(|f| f.slope);
    Ok(ConsistencyReport {
        rows,
        monotone,
        exponent,
        insufficient,
    })
}
