//! Locally-asynchronous SGD: per worker, `U` lock-free updater threads and
//! one averaging thread sharing a [`ParamStore`].

use std::hint::spin_loop;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    eval_due, AllReduce, AveragingRound, BlockSteps, DelayCounts, EvalPoint, LogLevel, RunConfig, RunOutput,
    UpdateRecord,
};
use super::events::Event;
use crate::error::{Error, Result};
use crate::objectives::{stream_seed, Objective, Sampler};
use crate::paramstore::ParamStore;
use crate::partition::BlockPartition;

struct Worker {
    store: ParamStore,
    active: AtomicUsize,
    last_avg_stamp: AtomicU64,
    good: AtomicU64,
    bad: AtomicU64,
    unclassified: AtomicU64,
    flops: AtomicU64,
    backward_flops: AtomicU64,
    partial_steps: AtomicU64,
    /// Indexed by block id.
    block_steps: Vec<AtomicU64>,
    block_backward: Vec<AtomicU64>,
    /// Counter value at the last round, published by the averager.
    s_pre: AtomicU64,
    in_round: AtomicBool,
    /// Set by the averager once the round budget is reached.
    stop: AtomicBool,
    gate: Option<RwLock<()>>,
}

impl Worker {
    fn new(init: &[f64], cfg: &RunConfig) -> Self {
        Worker {
            store: if cfg.provenance_sample > 0 {
                ParamStore::with_provenance(init)
            } else {
                ParamStore::new(init)
            },
            active: AtomicUsize::new(cfg.updaters),
            last_avg_stamp: AtomicU64::new(0),
            good: AtomicU64::new(0),
            bad: AtomicU64::new(0),
            unclassified: AtomicU64::new(0),
            flops: AtomicU64::new(0),
            backward_flops: AtomicU64::new(0),
            partial_steps: AtomicU64::new(0),
            block_steps: (0..=cfg.updaters).map(|_| AtomicU64::new(0)).collect(),
            block_backward: (0..=cfg.updaters).map(|_| AtomicU64::new(0)).collect(),
            s_pre: AtomicU64::new(0),
            in_round: AtomicBool::new(false),
            stop: AtomicBool::new(false),
            gate: cfg.quiescent.then(|| RwLock::new(())),
        }
    }
}

struct Shared<'a> {
    cfg: &'a RunConfig,
    obj: &'a Objective,
    partition: BlockPartition,
    workers: Vec<Worker>,
    allreduce: AllReduce,
    abort: AtomicBool,
    failure: Mutex<Option<Error>>,
    start: Instant,
}

impl Shared<'_> {
    fn fail(&self, err: Error) {
        self.failure.lock().unwrap().get_or_insert(err);
        self.abort.store(true, Ordering::Release);
        self.allreduce.abort();
    }

    fn aborted(&self) -> bool {
        self.abort.load(Ordering::Acquire)
    }

    fn delay_counts(&self) -> DelayCounts {
        let mut c = DelayCounts::default();
        for w in &self.workers {
            c.good += w.good.load(Ordering::Relaxed);
            c.bad += w.bad.load(Ordering::Relaxed);
            c.unclassified += w.unclassified.load(Ordering::Relaxed);
        }
        c
    }

    fn eval_point(&self, round: u64, params: Vec<f64>) -> EvalPoint {
        EvalPoint {
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
            minibatches: self
                .workers
                .iter()
                .map(|w| w.store.read_counter().min(self.cfg.budget))
                .sum(),
            round,
            flops: self
                .workers
                .iter()
                .map(|w| w.flops.load(Ordering::Relaxed))
                .sum(),
            p_hat: self.delay_counts().p_hat(),
            params,
        }
    }
}

struct Backoff(u32);

impl Backoff {
    fn snooze(&mut self) {
        if self.0 < 6 {
            for _ in 0..(1u32 << self.0) {
                spin_loop();
            }
        } else {
            thread::yield_now();
        }
        self.0 = (self.0 + 1).min(10);
    }

    fn reset(&mut self) {
        self.0 = 0;
    }
}

/// Runs LAP-SGD or LPP-SGD (selected by `cfg.block_policy`).
pub fn run_local_async(cfg: &RunConfig, obj: &Objective, init: &[f64]) -> Result<RunOutput> {
    cfg.validate(obj)?;
    let partition = cfg.resolve_partition(obj)?;
    let shared = Shared {
        cfg,
        obj,
        partition,
        workers: (0..cfg.workers).map(|_| Worker::new(init, cfg)).collect(),
        allreduce: AllReduce::new(cfg.workers),
        abort: AtomicBool::new(false),
        failure: Mutex::new(None),
        start: Instant::now(),
    };
    let (tx, rx) = mpsc::channel();
    tx.send(Event::Eval(EvalPoint {
        wall_ms: 0.0,
        minibatches: 0,
        round: 0,
        flops: 0,
        p_hat: 1.0,
        params: init.to_vec(),
    }))
    .expect("receiver alive");

    let (wall, collected) = thread::scope(|scope| {
        let collector = thread::Builder::new()
            .name("collector".into())
            .spawn_scoped(scope, move || collect(rx));
        let collector = match collector {
            Ok(c) => c,
            Err(e) => {
                shared.fail(Error::Run(format!("failed to spawn collector: {e}")));
                return (shared.start.elapsed(), None);
            }
        };
        let mut handles = Vec::new();
        'spawn: for q in 0..cfg.workers {
            let shared = &shared;
            let avg_tx = tx.clone();
            match thread::Builder::new()
                .name(format!("averager-{q}"))
                .spawn_scoped(scope, move || averager(shared, q, avg_tx))
            {
                Ok(h) => handles.push(h),
                Err(e) => {
                    shared.fail(Error::Run(format!("failed to spawn averager {q}: {e}")));
                    break 'spawn;
                }
            }
            for rank in 1..=cfg.updaters {
                let tx = tx.clone();
                match thread::Builder::new()
                    .name(format!("updater-{q}-{rank}"))
                    .spawn_scoped(scope, move || updater(shared, q, rank, tx))
                {
                    Ok(h) => handles.push(h),
                    Err(e) => {
                        shared.fail(Error::Run(format!(
                            "failed to spawn updater {q}/{rank}: {e}"
                        )));
                        break 'spawn;
                    }
                }
            }
        }
        drop(tx);
        for h in handles {
            if h.join().is_err() {
                shared.fail(Error::Run("training thread panicked".into()));
            }
        }
        let wall = shared.start.elapsed();
        (wall, collector.join().ok())
    });

    if let Some(err) = shared.failure.lock().unwrap().take() {
        return Err(err);
    }
    let (mut updates, mut rounds, mut evals) =
        collected.ok_or_else(|| Error::Run("event collector failed".into()))?;
    updates.sort_by_key(|r| (r.worker, r.update_order));
    rounds.sort_by_key(|r| (r.round, r.worker));
    evals.sort_by(|a, b| a.wall_ms.total_cmp(&b.wall_ms));

    let worker_params: Vec<Vec<f64>> = shared.workers.iter().map(|w| w.store.to_vec()).collect();
    let sum = |f: fn(&Worker) -> &AtomicU64| -> u64 {
        shared
            .workers
            .iter()
            .map(|w| f(w).load(Ordering::Relaxed))
            .sum()
    };
    Ok(RunOutput {
        algo: cfg.algo,
        seed: cfg.seed,
        dim: obj.dim(),
        workers: cfg.workers,
        batch: cfg.batch,
        initial_params: init.to_vec(),
        final_params: worker_params[0].clone(),
        worker_params,
        wall,
        flops: sum(|w| &w.flops),
        backward_flops: sum(|w| &w.backward_flops),
        minibatches: shared
            .workers
            .iter()
            .map(|w| w.store.read_counter().min(cfg.budget))
            .collect(),
        partial_steps: sum(|w| &w.partial_steps),
        block_steps: (0..=cfg.updaters)
            .map(|i| BlockSteps {
                steps: shared.workers.iter().map(|w| w.block_steps[i].load(Ordering::Relaxed)).sum(),
                backward_flops: shared
                    .workers
                    .iter()
                    .map(|w| w.block_backward[i].load(Ordering::Relaxed))
                    .sum(),
            })
            .collect(),
        updates,
        rounds,
        evals,
        delay: shared.delay_counts(),
    })
}

type Collected = (Vec<UpdateRecord>, Vec<AveragingRound>, Vec<EvalPoint>);

fn collect(rx: Receiver<Event>) -> Collected {
    let mut updates = Vec::new();
    let mut rounds = Vec::new();
    let mut evals = Vec::new();
    for event in rx {
        match event {
            Event::Update(u) => updates.push(u),
            Event::Round(r) => rounds.push(r),
            Event::Eval(e) => evals.push(e),
        }
    }
    (updates, rounds, evals)
}

fn updater(shared: &Shared<'_>, q: usize, rank: usize, tx: Sender<Event>) {
    let cfg = shared.cfg;
    let worker = &shared.workers[q];
    let store = &worker.store;
    let d = store.len();
    let streams = cfg.workers * cfg.updaters;
    let stream = q * cfg.updaters + (rank - 1);
    let mut sampler = Sampler::new(cfg.sampling, shared.obj.num_samples(), cfg.seed, stream, streams);
    let mut prov_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[0xA5, q as u64, rank as u64]));
    let all_indices: Vec<usize> = (0..d).collect();
    let track = store.tracks_provenance();
    let record = track || cfg.log == LogLevel::Full;

    while !shared.aborted() && !worker.stop.load(Ordering::Acquire) {
        let _pause = worker.gate.as_ref().map(|g| g.read().unwrap());
        let s = store.read_and_inc();
        if s >= cfg.budget {
            break;
        }
        let (snapshot, provenance) = if track {
            let sample = if cfg.provenance_sample >= d {
                all_indices.clone()
            } else {
                let mut idx = index::sample(&mut prov_rng, d, cfg.provenance_sample).into_vec();
                idx.sort_unstable();
                idx
            };
            store.collect_snapshot_with_provenance(s, &sample)
        } else {
            (store.collect_snapshot(s), Vec::new())
        };
        let choice = cfg.block_policy.choose(s, cfg.warm_start, rank);
        let block = match shared.partition.block(choice.block_id) {
            Ok(b) => b,
            Err(e) => return shared.fail(e),
        };
        let batch = sampler.next_batch(cfg.batch);
        let grad = match shared.obj.grad_block(&snapshot.values, block.clone(), &batch) {
            Ok(g) => g,
            Err(e) => return shared.fail(e),
        };
        let lr = cfg.lr.lr_at(s);
        let delta: Vec<f64> = grad.values.iter().map(|g| lr * g).collect();

        if cfg.interleave {
            thread::yield_now();
        }
        let u = store.next_update_order();
        if let Err(e) = store.sub_assign(block.clone(), &delta, u) {
            return shared.fail(e);
        }

        if track {
            let round_start = worker.last_avg_stamp.load(Ordering::Acquire);
            let good = provenance.iter().all(|p| p.update_order >= round_start);
            if good { &worker.good } else { &worker.bad }.fetch_add(1, Ordering::Relaxed);
        } else {
            worker.unclassified.fetch_add(1, Ordering::Relaxed);
        }
        worker.flops.fetch_add(grad.flops, Ordering::Relaxed);
        worker
            .backward_flops
            .fetch_add(grad.backward_flops, Ordering::Relaxed);
        worker.block_steps[choice.block_id].fetch_add(1, Ordering::Relaxed);
        worker.block_backward[choice.block_id].fetch_add(grad.backward_flops, Ordering::Relaxed);
        if choice.block_id != 0 {
            worker.partial_steps.fetch_add(1, Ordering::Relaxed);
        }
        // Scheduling hint only: with fewer cores than threads the averager
        // would otherwise rarely run while a round is due.
        let done = s + 1;
        if worker.in_round.load(Ordering::Relaxed)
            || done.saturating_sub(worker.s_pre.load(Ordering::Relaxed)) >= cfg.sync.sync_k(done)
        {
            thread::yield_now();
        }
        if record {
            let full = cfg.log == LogLevel::Full;
            let _ = tx.send(Event::Update(UpdateRecord {
                worker: q,
                rank,
                snapshot_order: s,
                update_order: u,
                block_id: choice.block_id,
                block,
                lr,
                flops: grad.flops,
                backward_flops: grad.backward_flops,
                provenance,
                snapshot: full.then_some(snapshot.values),
                gradient: full.then_some(grad.values),
            }));
        }
    }
    worker.active.fetch_sub(1, Ordering::AcqRel);
}

fn averager(shared: &Shared<'_>, q: usize, tx: Sender<Event>) {
    let cfg = shared.cfg;
    let worker = &shared.workers[q];
    let store = &worker.store;
    let mut s_pre = 0u64;
    let mut next_eval = cfg.eval_interval;
    let mut backoff = Backoff(0);
    loop {
        if shared.aborted() {
            return;
        }
        let s_cur = store.read_counter().min(cfg.budget);
        let finished = worker.active.load(Ordering::Acquire) == 0;
        if !finished && s_cur - s_pre < cfg.sync.sync_k(s_cur) {
            backoff.snooze();
            continue;
        }
        backoff.reset();

        worker.in_round.store(true, Ordering::Relaxed);
        let pause = worker.gate.as_ref().map(|g| g.write().unwrap());
        let s_cur = store.read_counter().min(cfg.budget);
        let finished = worker.active.load(Ordering::Acquire) == 0;
        let snapshot = store.collect_snapshot(s_cur);
        let Some(reduced) = shared.allreduce.reduce(q, snapshot.values.clone(), finished) else {
            return;
        };
        let delta: Vec<f64> = reduced
            .mean
            .iter()
            .zip(&snapshot.values)
            .map(|(m, v)| m - v)
            .collect();
        let stamp = store.next_update_order();
        worker.last_avg_stamp.fetch_max(stamp, Ordering::AcqRel);
        if let Err(e) = store.add_assign(&delta, stamp) {
            return shared.fail(e);
        }
        drop(pause);
        worker.in_round.store(false, Ordering::Relaxed);

        let minor_count = s_cur - s_pre;
        s_pre = s_cur;
        worker.s_pre.store(s_cur, Ordering::Relaxed);
        let full = cfg.log == LogLevel::Full;
        let keep_mean = full || (cfg.log == LogLevel::Rounds && q == 0);
        let _ = tx.send(Event::Round(AveragingRound {
            round: reduced.round,
            worker: q,
            update_order: stamp,
            snapshot_order: s_cur,
            minor_count,
            snapshot: full.then(|| snapshot.values.clone()),
            mean: keep_mean.then(|| reduced.mean.to_vec()),
            delta: full.then_some(delta),
        }));
        if q == 0 && (reduced.all_finished || eval_due(s_cur, &mut next_eval, cfg.eval_interval)) {
            let _ = tx.send(Event::Eval(
                shared.eval_point(reduced.round, reduced.mean.to_vec()),
            ));
        }
        if reduced.all_finished {
            return;
        }
        if cfg.round_budget.is_some_and(|j| reduced.round >= j) {
            worker.stop.store(true, Ordering::Release);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Algo, BlockPolicy};
    use crate::objectives::{Dataset, Objective};
    use crate::schedules::SyncScheme;

    fn quad(d: usize) -> Objective {
        let rows: Vec<f64> = (0..4 * d).map(|i| (i % 7) as f64 * 0.25).collect();
        Objective::quadratic(Dataset::new(rows, vec![0.0; 4], d).unwrap())
    }

    #[test]
    fn processes_exactly_the_budget() {
        let obj = quad(6);
        let mut cfg = RunConfig::new(Algo::LapSgd, 2, 3, 2, 200, 0.05).unwrap();
        cfg.provenance_sample = 6;
        let out = run_local_async(&cfg, &obj, &vec![0.0; 6]).unwrap();
        assert_eq!(out.minibatches, vec![200, 200]);
        assert_eq!(out.updates.len(), 400);
        assert_eq!(out.delay.good + out.delay.bad, 400);
        for q in 0..2 {
            let mut orders: Vec<u64> = out
                .updates
                .iter()
                .filter(|u| u.worker == q)
                .map(|u| u.snapshot_order)
                .collect();
            orders.sort_unstable();
            assert_eq!(orders, (0..200).collect::<Vec<_>>());
        }
    }

    #[test]
    fn workers_agree_after_final_round() {
        let obj = quad(5);
        let cfg = RunConfig::new(Algo::LapSgd, 3, 2, 1, 300, 0.05).unwrap();
        let out = run_local_async(&cfg, &obj, &vec![1.0; 5]).unwrap();
        for w in &out.worker_params {
            assert_eq!(w, &out.final_params);
        }
        assert!(out.rounds_completed() >= 1);
        assert_eq!(out.evals.first().unwrap().minibatches, 0);
        assert_eq!(out.evals.last().unwrap().minibatches, 900);
    }

    #[test]
    fn lpp_counts_partial_steps() {
        let obj = quad(8);
        let mut cfg = RunConfig::new(Algo::LppSgd, 1, 2, 1, 400, 0.05).unwrap();
        cfg.sync = SyncScheme::constant(400, 8).unwrap();
        let out = run_local_async(&cfg, &obj, &vec![0.0; 8]).unwrap();
        // s = 42, 44, ..., 398
        assert_eq!(out.partial_steps, 179);
        cfg.block_policy = BlockPolicy::PartialOnly;
        let out = run_local_async(&cfg, &obj, &vec![0.0; 8]).unwrap();
        assert_eq!(out.partial_steps, 400);
    }

    #[test]
    fn full_log_carries_vectors() {
        let obj = quad(3);
        let mut cfg = RunConfig::new(Algo::LapSgd, 2, 1, 1, 50, 0.1).unwrap();
        cfg.log = LogLevel::Full;
        cfg.quiescent = true;
        let out = run_local_async(&cfg, &obj, &vec![0.0; 3]).unwrap();
        assert_eq!(out.updates.len(), 100);
        assert!(out.updates.iter().all(|u| u.snapshot.is_some() && u.gradient.is_some()));
        assert!(out.rounds.iter().all(|r| r.delta.is_some() && r.mean.is_some()));
    }
}
