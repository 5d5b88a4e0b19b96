use serde::{Deserialize, Serialize};

use crate::paramstore::Provenance;

/// How much of each run is logged to the event stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    /// Averaging rounds without vectors; update records only when provenance
    /// tracking is on.
    #[default]
    Off,
    /// Adds worker 0's round means (the averaged iterates).
    Rounds,
    /// Every update carries its snapshot and gradient; every round carries
    /// its snapshot, mean and delta. Test-scale budgets only.
    Full,
}

/// One model write by an updater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub worker: usize,
    /// Updater rank, 1-based.
    pub rank: usize,
    /// Snapshot order: counter value read before the snapshot.
    pub snapshot_order: u64,
    /// Update order, unique per worker.
    pub update_order: u64,
    pub block_id: usize,
    pub block: std::ops::Range<usize>,
    pub lr: f64,
    pub flops: u64,
    pub backward_flops: u64,
    /// Sampled per-element provenance of the snapshot (empty when tracking
    /// is disabled).
    pub provenance: Vec<Provenance>,
    pub snapshot: Option<Vec<f64>>,
    pub gradient: Option<Vec<f64>>,
}

/// One averaging round as seen by one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingRound {
    /// 1-based round number, shared by all workers.
    pub round: u64,
    pub worker: usize,
    /// Update order claimed by the averager for its in-place apply.
    pub update_order: u64,
    /// Counter value when the round was triggered.
    pub snapshot_order: u64,
    /// Counter advance since the previous round, `K_j^q`.
    pub minor_count: u64,
    pub snapshot: Option<Vec<f64>>,
    pub mean: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
}

/// Averaged model captured for post-hoc evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub wall_ms: f64,
    /// Minibatches processed, summed over workers.
    pub minibatches: u64,
    pub round: u64,
    pub flops: u64,
    pub p_hat: f64,
    pub params: Vec<f64>,
}

#[derive(Debug)]
pub(crate) enum Event {
    Update(UpdateRecord),
    Round(AveragingRound),
    Eval(EvalPoint),
}
