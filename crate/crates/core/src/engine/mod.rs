//! Training drivers: the locally-asynchronous algorithms and the synchronous
//! baselines, under one budget and metrics regime.
//!
//! The budget `budget` is the number of minibatches each worker processes
//! (the shared counter's range). Asynchronous workers are thread groups in
//! one address space, each with a private [`ParamStore`](crate::paramstore::ParamStore).

mod allreduce;
mod baseline;
mod events;
mod local;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

pub use allreduce::{AllReduce, Reduced};
pub use baseline::{run_mb_sgd, run_mb_sgd_with, run_pl_sgd};
pub use events::{AveragingRound, EvalPoint, LogLevel, UpdateRecord};
pub use local::run_local_async;

use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::objectives::{Objective, SamplingMode};
use crate::partition::{select_block, BlockChoice, BlockPartition, SelectionReason};
use crate::schedules::{LrSchedule, SyncScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    MbSgd,
    PlSgd,
    LapSgd,
    LppSgd,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::MbSgd, Algo::PlSgd, Algo::LapSgd, Algo::LppSgd];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::MbSgd => "mb_sgd",
            Algo::PlSgd => "pl_sgd",
            Algo::LapSgd => "lap_sgd",
            Algo::LppSgd => "lpp_sgd",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Algo::MbSgd | Algo::PlSgd)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "mb_sgd" | "mb" => Ok(Algo::MbSgd),
            "pl_sgd" | "pl" => Ok(Algo::PlSgd),
            "lap_sgd" | "lap" => Ok(Algo::LapSgd),
            "lpp_sgd" | "lpp" => Ok(Algo::LppSgd),
            _ => Err(Error::config("algo", format!("unknown algorithm `{s}`"))),
        }
    }
}

/// Which block an updater differentiates at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockPolicy {
    /// Always the full model.
    Full,
    /// Full model during warm start, then alternating full / own block.
    Alternating,
    /// Always the updater's own block (test configurations).
    PartialOnly,
}

impl BlockPolicy {
    pub fn choose(self, s: u64, warm_start: u64, rank: usize) -> BlockChoice {
        match self {
            BlockPolicy::Full => BlockChoice {
                block_id: 0,
                reason: SelectionReason::WarmStart,
            },
            BlockPolicy::Alternating => select_block(s, warm_start, rank),
            BlockPolicy::PartialOnly => BlockChoice {
                block_id: rank,
                reason: SelectionReason::AlternatePartial,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algo: Algo,
    pub workers: usize,
    pub updaters: usize,
    pub batch: usize,
    pub budget: u64,
    pub lr: LrSchedule,
    pub sync: SyncScheme,
    pub warm_start: u64,
    pub seed: u64,
    /// Minibatches (per worker) between evaluation points; 0 records only
    /// the start and end.
    pub eval_interval: u64,
    pub sampling: SamplingMode,
    pub block_policy: BlockPolicy,
    /// Overrides the objective's default `updaters`-way partition.
    pub partition: Option<BlockPartition>,
    pub log: LogLevel,
    /// Elements per snapshot whose provenance is sampled; 0 disables
    /// tracking, values `>= d` track every element.
    pub provenance_sample: usize,
    /// Test mode: updaters pause while their worker's averager runs a round.
    pub quiescent: bool,
    /// Updaters yield between snapshot and write, so that on hosts with
    /// fewer cores than threads other writers interleave with every step.
    pub interleave: bool,
    /// Async runs only: stop the updaters once this many averaging rounds
    /// have completed (the budget still caps each worker).
    pub round_budget: Option<u64>,
}

impl RunConfig {
    /// Configuration with the defaults used throughout: cosine-free constant
    /// rate `lr`, `K = 1` until `budget / 2` then `H = 16`, warm start
    /// `budget / 10`.
    pub fn new(algo: Algo, workers: usize, updaters: usize, batch: usize, budget: u64, lr: f64) -> Result<Self> {
        Ok(RunConfig {
            algo,
            workers,
            updaters,
            batch,
            budget,
            lr: LrSchedule::constant(lr, budget)?,
            sync: SyncScheme::new(budget, 16)?,
            warm_start: budget / 10,
            seed: 0,
            eval_interval: 0,
            sampling: SamplingMode::Iid,
            block_policy: match algo {
                Algo::LppSgd => BlockPolicy::Alternating,
                _ => BlockPolicy::Full,
            },
            partition: None,
            log: LogLevel::Off,
            provenance_sample: 0,
            quiescent: false,
            interleave: false,
            round_budget: None,
        })
    }

    pub fn validate(&self, obj: &Objective) -> Result<()> {
        self.validate_settings()?;
        if let Some(p) = &self.partition {
            if p.dim() != obj.dim() {
                return Err(Error::config(
                    "partition",
                    format!("covers {} parameters, objective has {}", p.dim(), obj.dim()),
                ));
            }
        }
        if self.block_policy != BlockPolicy::Full {
            let parts = self.resolve_partition(obj)?.parts();
            if parts != self.updaters {
                return Err(Error::config(
                    "partition",
                    format!("{parts} blocks for {} updaters", self.updaters),
                ));
            }
        }
        Ok(())
    }

    /// The checks that do not depend on the objective.
    pub fn validate_settings(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.updaters == 0 {
            return Err(Error::config("updaters", "must be at least 1"));
        }
        if self.algo.is_baseline() && self.updaters != 1 {
            return Err(Error::config(
                "updaters",
                format!("{} runs a single updater per worker, got {}", self.algo, self.updaters),
            ));
        }
        if self.algo == Algo::LapSgd && self.block_policy != BlockPolicy::Full {
            return Err(Error::config("block_policy", "lap_sgd always uses the full model"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "must be at least 1"));
        }
        if self.budget == 0 {
            return Err(Error::config("budget", "must be at least 1"));
        }
        if self.round_budget == Some(0) {
            return Err(Error::config("round_budget", "must be at least 1"));
        }
        if self.warm_start > self.budget {
            return Err(Error::config(
                "tst",
                format!("warm start {} exceeds the budget {}", self.warm_start, self.budget),
            ));
        }
        Ok(())
    }

    pub fn resolve_partition(&self, obj: &Objective) -> Result<BlockPartition> {
        match (&self.partition, self.block_policy) {
            (Some(p), _) => Ok(p.clone()),
            (None, BlockPolicy::Full) => BlockPartition::trivial(obj.dim()),
            (None, _) => obj.partition(self.updaters),
        }
    }

    pub fn total_minibatches(&self) -> u64 {
        self.budget * self.workers as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockSteps {
    pub steps: u64,
    pub backward_flops: u64,
}

/// Counts of classified delay events accumulated while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DelayCounts {
    pub good: u64,
    pub bad: u64,
    pub unclassified: u64,
}

impl DelayCounts {
    pub fn p_hat(&self) -> f64 {
        let n = self.good + self.bad;
        if n == 0 {
            1.0
        } else {
            self.good as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub algo: Algo,
    pub seed: u64,
    pub dim: usize,
    pub workers: usize,
    pub batch: usize,
    pub initial_params: Vec<f64>,
    /// Worker 0's model at the end (all workers agree after the final round).
    pub final_params: Vec<f64>,
    pub worker_params: Vec<Vec<f64>>,
    /// Training wall time, evaluation excluded.
    pub wall: Duration,
    pub flops: u64,
    pub backward_flops: u64,
    /// Final shared-counter value per worker.
    pub minibatches: Vec<u64>,
    pub partial_steps: u64,
    /// Steps and backward flops per block id (index 0 is the full model).
    /// Empty for the baselines.
    pub block_steps: Vec<BlockSteps>,
    pub updates: Vec<UpdateRecord>,
    pub rounds: Vec<AveragingRound>,
    pub evals: Vec<EvalPoint>,
    pub delay: DelayCounts,
}

impl RunOutput {
    pub fn rounds_completed(&self) -> u64 {
        self.rounds.iter().map(|r| r.round).max().unwrap_or(0)
    }

    /// Largest `K_j^q` seen.
    pub fn max_minor_count(&self) -> u64 {
        self.rounds.iter().map(|r| r.minor_count).max().unwrap_or(0)
    }

    /// Metrics table evaluated post hoc on the captured averaged models.
    pub fn metrics(&self, obj: &Objective) -> Result<Vec<MetricsRow>> {
        self.evals
            .iter()
            .map(|e| {
                let grad = obj.full_gradient(&e.params)?;
                Ok(MetricsRow {
                    algo: self.algo,
                    seed: self.seed,
                    wall_ms: e.wall_ms,
                    samples: e.minibatches * self.batch as u64,
                    round: e.round,
                    train_loss: obj.full_loss(&e.params)?,
                    grad_norm_sq: grad.iter().map(|g| g * g).sum(),
                    flops: e.flops,
                    p_hat: e.p_hat,
                })
            })
            .collect()
    }
}

/// Runs `cfg` on `obj` starting from `init`.
pub fn run_experiment(cfg: &RunConfig, obj: &Objective, init: &[f64]) -> Result<RunOutput> {
    cfg.validate(obj)?;
    if init.len() != obj.dim() {
        return Err(Error::Shape {
            expected: obj.dim(),
            got: init.len(),
        });
    }
    match cfg.algo {
        Algo::MbSgd => run_mb_sgd(cfg, obj, init),
        Algo::PlSgd => run_pl_sgd(cfg, obj, init),
        Algo::LapSgd | Algo::LppSgd => run_local_async(cfg, obj, init),
    }
}

/// Whether an evaluation is due after `done` minibatches.
pub(crate) fn eval_due(done: u64, next: &mut u64, interval: u64) -> bool {
    if interval > 0 && done >= *next {
        while *next <= done {
            *next += interval;
        }
        true
    } else {
        false
    }
}
