//! Post-hoc measurements over a run's event log: iteration orders, delay
//! events, minor-view replay, elastic consistency and the ergodic rate.
//!
//! Every model write on a worker carries a unique update order `u`. The
//! averager's write at round `j` is the reference point: an updater write
//! with order `u` belongs to round `j` = number of averager stamps below
//! `u`, and `t` is its 0-based position among that round's updater writes.

mod consistency;
pub mod eventlog;
mod rate;
mod replay;

use std::collections::BTreeMap;

pub use consistency::{
    consistency_stats, elastic_consistency_check, ConsistencyReport, ConsistencyRow,
    ConsistencyStats,
};
pub use rate::{ergodic_rate_check, ergodic_statistic, RateReport};
pub use replay::{reconstruct_minor_views, MinorViews, ReplayMode};

use crate::engine::{AveragingRound, RunOutput, UpdateRecord};
use crate::error::{Error, Result};
use crate::paramstore::Provenance;

/// Good iff every sampled element was last written at or after
/// `round_start`; `None` when the record carries no provenance.
pub fn classify_delay_event(provenance: &[Provenance], round_start: u64) -> Option<bool> {
    if provenance.is_empty() {
        None
    } else {
        Some(provenance.iter().all(|p| p.update_order >= round_start))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IterationOrder {
    pub j: u64,
    pub t: u64,
}

/// Averager stamps of `worker`, ascending.
pub fn round_stamps(rounds: &[AveragingRound], worker: usize) -> Vec<u64> {
    let mut s: Vec<u64> = rounds
        .iter()
        .filter(|r| r.worker == worker)
        .map(|r| r.update_order)
        .collect();
    s.sort_unstable();
    s
}

/// `(j, t)` and the round-start stamp for every update, in input order.
/// Fails if two writes on one worker share an update order.
pub fn iteration_orders(
    updates: &[UpdateRecord],
    rounds: &[AveragingRound],
) -> Result<Vec<(IterationOrder, u64)>> {
    let workers = updates
        .iter()
        .map(|u| u.worker)
        .chain(rounds.iter().map(|r| r.worker))
        .max()
        .map_or(0, |w| w + 1);
    let stamps: Vec<Vec<u64>> = (0..workers).map(|q| round_stamps(rounds, q)).collect();

    let mut by_worker: Vec<Vec<usize>> = vec![Vec::new(); workers];
    for (i, u) in updates.iter().enumerate() {
        by_worker[u.worker].push(i);
    }
    let mut out = vec![(IterationOrder { j: 0, t: 0 }, 0); updates.len()];
    for (q, idx) in by_worker.iter_mut().enumerate() {
        idx.sort_by_key(|&i| updates[i].update_order);
        let st = &stamps[q];
        let mut last: Option<u64> = None;
        let mut t = 0;
        let mut prev_j = u64::MAX;
        for &i in idx.iter() {
            let u = updates[i].update_order;
            if last == Some(u) || st.binary_search(&u).is_ok() {
                return Err(Error::Reconstruction(format!(
                    "update order {u} used twice on worker {q}"
                )));
            }
            last = Some(u);
            let j = st.partition_point(|&s| s < u) as u64;
            if j != prev_j {
                t = 0;
                prev_j = j;
            }
            let start = if j == 0 { 0 } else { st[j as usize - 1] };
            out[i] = (IterationOrder { j, t }, start);
            t += 1;
        }
    }
    Ok(out)
}

/// One classified update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEvent {
    pub worker: usize,
    pub update_order: u64,
    pub order: IterationOrder,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayStats {
    pub events: Vec<DelayEvent>,
    /// Updates without provenance.
    pub unclassified: u64,
    /// Largest recorded `K_j^q`.
    pub k_bar: u64,
}

/// Buckets with fewer events than this are left out of [`DelayStats::min_p_hat`].
pub const MIN_BUCKET_EVENTS: u64 = 30;

impl DelayStats {
    pub fn from_records(updates: &[UpdateRecord], rounds: &[AveragingRound]) -> Result<Self> {
        let orders = iteration_orders(updates, rounds)?;
        let mut events = Vec::new();
        let mut unclassified = 0;
        for (rec, (order, start)) in updates.iter().zip(orders) {
            match classify_delay_event(&rec.provenance, start) {
                Some(good) => events.push(DelayEvent {
                    worker: rec.worker,
                    update_order: rec.update_order,
                    order,
                    good,
                }),
                None => unclassified += 1,
            }
        }
        Ok(DelayStats {
            events,
            unclassified,
            k_bar: rounds.iter().map(|r| r.minor_count).max().unwrap_or(0),
        })
    }

    pub fn from_run(out: &RunOutput) -> Result<Self> {
        Self::from_records(&out.updates, &out.rounds)
    }

    pub fn good(&self) -> u64 {
        self.events.iter().filter(|e| e.good).count() as u64
    }

    /// Pooled fraction of good events (1 when nothing was classified).
    pub fn p_hat(&self) -> f64 {
        if self.events.is_empty() {
            1.0
        } else {
            self.good() as f64 / self.events.len() as f64
        }
    }

    /// `(good, total)` per `(worker, t)`, pooling rounds.
    pub fn buckets(&self) -> BTreeMap<(usize, u64), (u64, u64)> {
        let mut m = BTreeMap::new();
        for e in &self.events {
            let b = m.entry((e.worker, e.order.t)).or_insert((0, 0));
            b.0 += e.good as u64;
            b.1 += 1;
        }
        m
    }

    /// Smallest per-`(worker, t)` good fraction over buckets with at least
    /// [`MIN_BUCKET_EVENTS`] events (diagnostic; `None` if no bucket
    /// qualifies).
    pub fn min_bucket_p_hat(&self) -> Option<f64> {
        self.buckets()
            .values()
            .filter(|(_, n)| *n >= MIN_BUCKET_EVENTS)
            .map(|(g, n)| *g as f64 / *n as f64)
            .reduce(f64::min)
    }

    /// Minimum over workers and time of the running good fraction, taken
    /// in update order once a worker has [`MIN_BUCKET_EVENTS`] classified
    /// events (or at its last event if it has fewer).
    pub fn min_p_hat(&self) -> f64 {
        let mut by_worker: BTreeMap<usize, Vec<&DelayEvent>> = BTreeMap::new();
        for e in &self.events {
            by_worker.entry(e.worker).or_default().push(e);
        }
        let mut min = 1.0f64;
        for events in by_worker.values_mut() {
            events.sort_by_key(|e| e.update_order);
            let burn_in = (MIN_BUCKET_EVENTS as usize).min(events.len());
            let mut good = 0u64;
            for (i, e) in events.iter().enumerate() {
                good += e.good as u64;
                if i + 1 >= burn_in {
                    min = min.min(good as f64 / (i + 1) as f64);
                }
            }
        }
        min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummabilityReport {
    pub total_events: u64,
    /// Sum of the per-event good indicators (the empirical good mass).
    pub good_mass: f64,
    pub mean_p_hat: f64,
    /// Good fraction over the second half of each worker's events.
    pub late_p_hat: f64,
    /// Good mass grows at least linearly: both the overall and the late
    /// fractions are at least `floor`.
    pub linear_growth: bool,
    pub floor: f64,
}

impl SummabilityReport {
    /// Flagged when the good mass does not grow linearly.
    pub fn flagged(&self) -> bool {
        !self.linear_growth
    }
}

/// Accumulated good mass and whether it grows linearly in the iteration
/// count (fraction bounded below by `floor`).
pub fn summability_report(stats: &DelayStats, floor: f64) -> SummabilityReport {
    let total = stats.events.len() as u64;
    let good = stats.good();
    let mut by_worker: BTreeMap<usize, Vec<&DelayEvent>> = BTreeMap::new();
    for e in &stats.events {
        by_worker.entry(e.worker).or_default().push(e);
    }
    let (mut late_good, mut late_total) = (0u64, 0u64);
    for events in by_worker.values_mut() {
        events.sort_by_key(|e| e.order);
        let half = &events[events.len() / 2..];
        late_good += half.iter().filter(|e| e.good).count() as u64;
        late_total += half.len() as u64;
    }
    let frac = |g: u64, n: u64| if n == 0 { 0.0 } else { g as f64 / n as f64 };
    let mean_p_hat = frac(good, total);
    let late_p_hat = frac(late_good, late_total);
    SummabilityReport {
        total_events: total,
        good_mass: good as f64,
        mean_p_hat,
        late_p_hat,
        linear_growth: total > 0 && mean_p_hat >= floor && late_p_hat >= floor,
        floor,
    }
}
