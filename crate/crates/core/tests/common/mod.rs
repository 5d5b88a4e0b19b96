//! Helpers shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::thread;

use lpsgd::objectives::{Dataset, Objective, Synthetic};
use lpsgd::paramstore::{AtomicF64, ParamStore};

/// Each of `threads` threads calls `read_and_inc` `calls` times; the
/// returned values must be exactly `0..threads * calls`.
pub fn counter_uniqueness(threads: usize, calls: usize) -> Result<(), String> {
    let store = ParamStore::new(&[0.0]);
    let barrier = Barrier::new(threads);
    let seen: Vec<Vec<u64>> = thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    barrier.wait();
                    (0..calls).map(|_| store.read_and_inc()).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let n = (threads * calls) as u64;
    let all: HashSet<u64> = seen.iter().flatten().copied().collect();
    if all.len() as u64 != n || all.iter().any(|&v| v >= n) {
        return Err(format!("counter returned {} distinct values for {n} calls", all.len()));
    }
    if store.read_counter() != n {
        return Err(format!("final counter {} != {n}", store.read_counter()));
    }
    Ok(())
}

/// Every thread subtracts `-1` at every index of a shared 4-element store
/// `reps` times; no increment may be lost.
pub fn lost_update(threads: usize, reps: usize) -> Result<(), String> {
    let store = ParamStore::new(&[0.0; 4]);
    let barrier = Barrier::new(threads);
    thread::scope(|s| {
        for t in 0..threads {
            let (store, barrier) = (&store, &barrier);
            s.spawn(move || {
                barrier.wait();
                for r in 0..reps {
                    // Alternate between a block write and a single-index write.
                    if (t + r) % 2 == 0 {
                        store.sub_assign(0..4, &[-1.0; 4], 1).unwrap();
                    } else {
                        for i in 0..4 {
                            store.sub_assign(i..i + 1, &[-1.0], 1).unwrap();
                        }
                    }
                }
            });
        }
    });
    let expected = (threads * reps) as f64;
    match store.to_vec().iter().position(|&v| v != expected) {
        Some(i) => Err(format!("index {i}: {} != {expected}", store.get(i))),
        None => Ok(()),
    }
}

const SENTINELS: [u64; 4] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0x5555_5555_5555_5555,
    0x0F0F_F0F0_0F0F_F0F0,
    0xF0F0_0F0F_F0F0_0F0F,
];

/// Writers store bit-patterned sentinels while readers load; every read
/// must be one of the sentinels in full.
pub fn torn_reads(threads: usize, reps: usize) -> Result<(), String> {
    let cell = AtomicF64::new(f64::from_bits(SENTINELS[0]));
    let torn = AtomicBool::new(false);
    let barrier = Barrier::new(threads);
    thread::scope(|s| {
        for t in 0..threads {
            let (cell, torn, barrier) = (&cell, &torn, &barrier);
            s.spawn(move || {
                barrier.wait();
                for r in 0..reps {
                    if t % 2 == 0 {
                        cell.store(f64::from_bits(SENTINELS[(t / 2 + r) % 4]), Ordering::Release);
                    } else if !SENTINELS.contains(&cell.load(Ordering::Acquire).to_bits()) {
                        torn.store(true, Ordering::Relaxed);
                    }
                }
            });
        }
    });
    if torn.load(Ordering::Relaxed) {
        Err("observed a value that is not a written sentinel".into())
    } else {
        Ok(())
    }
}

/// One writer per index walks the value down by exact unit steps while the
/// other threads snapshot; every snapshot element must be a value written
/// at that index (an integer in `[-reps, 0]`), and a single reader's view
/// of one index never goes back in time.
pub fn snapshot_membership(threads: usize, reps: usize) -> Result<(), String> {
    let d = (threads / 2).max(1);
    let store = ParamStore::new(&vec![0.0; d]);
    let barrier = Barrier::new(threads);
    let bad = AtomicBool::new(false);
    thread::scope(|s| {
        for t in 0..threads {
            let (store, barrier, bad) = (&store, &barrier, &bad);
            s.spawn(move || {
                barrier.wait();
                if t < d {
                    for _ in 0..reps {
                        store.sub_assign(t..t + 1, &[1.0], 1).unwrap();
                    }
                } else {
                    let mut last = vec![0.0; d];
                    for k in 0..reps / 4 + 1 {
                        let snap = store.collect_snapshot(k as u64);
                        for (i, &v) in snap.values.iter().enumerate() {
                            let written = v.fract() == 0.0 && (-(reps as f64)..=0.0).contains(&v);
                            if !written || v > last[i] {
                                bad.store(true, Ordering::Relaxed);
                            }
                            last[i] = v;
                        }
                    }
                }
            });
        }
    });
    if bad.load(Ordering::Relaxed) {
        return Err("snapshot held a value never written at its index".into());
    }
    let end = store.to_vec();
    if end.iter().any(|&v| v != -(reps as f64)) {
        return Err(format!("final values {end:?}"));
    }
    Ok(())
}

/// One thread applies full-vector additions while the others subtract on
/// disjoint single-index blocks; both effects must land exactly once.
pub fn add_sub_ledger(threads: usize, reps: usize) -> Result<(), String> {
    let d = threads.max(2) - 1;
    let store = ParamStore::new(&vec![0.0; d]);
    let barrier = Barrier::new(threads.max(2));
    thread::scope(|s| {
        let (store_ref, barrier_ref) = (&store, &barrier);
        s.spawn(move || {
            barrier_ref.wait();
            let delta = vec![2.0; d];
            for _ in 0..reps {
                store_ref.add_assign(&delta, 1).unwrap();
            }
        });
        for i in 0..d {
            s.spawn(move || {
                barrier_ref.wait();
                for _ in 0..reps {
                    store_ref.sub_assign(i..i + 1, &[1.0], 1).unwrap();
                }
            });
        }
    });
    let expected = reps as f64;
    match store.to_vec().iter().position(|&v| v != expected) {
        Some(i) => Err(format!("index {i}: {} != {expected}", store.get(i))),
        None => Ok(()),
    }
}

/// The full paramstore stress suite at one thread count.
pub fn paramstore_suite(threads: usize) -> Result<(), String> {
    counter_uniqueness(threads, 64)?;
    lost_update(threads, 64)?;
    torn_reads(threads, 256)?;
    snapshot_membership(threads, 64)?;
    add_sub_ledger(threads, 64)?;
    Ok(())
}

/// Small quadratic objective on `n` targets in `d` dimensions.
pub fn quadratic(n: usize, d: usize, seed: u64) -> Objective {
    let data = Synthetic::LinearTargets {
        samples: n,
        dim: d,
        noise: 0.5,
    }
    .generate(seed)
    .unwrap();
    Objective::quadratic(data)
}

pub fn logistic(n: usize, d: usize, seed: u64) -> Objective {
    let data = Synthetic::GaussianBlobs {
        classes: 2,
        samples: n,
        dim: d,
        separation: 2.0,
        spread: 1.0,
    }
    .generate(seed)
    .unwrap();
    Objective::logistic(data).unwrap()
}

pub fn mlp(n: usize, d: usize, classes: usize, hidden: &[usize], seed: u64) -> Objective {
    let data = Synthetic::GaussianBlobs {
        classes,
        samples: n,
        dim: d,
        separation: 2.0,
        spread: 1.0,
    }
    .generate(seed)
    .unwrap();
    Objective::mlp(data, hidden).unwrap()
}

pub fn dataset(rows: &[&[f64]], labels: &[f64]) -> Dataset {
    let dim = rows[0].len();
    Dataset::new(rows.concat(), labels.to_vec(), dim).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central finite-difference gradient of the batch loss over `block`.
pub fn finite_difference(obj: &Objective, x: &[f64], block: std::ops::Range<usize>, batch: &[usize]) -> Vec<f64> {
    let h = 1e-6;
    let mut probe = x.to_vec();
    block
        .map(|e| {
            probe[e] = x[e] + h;
            let up = obj.loss(&probe, batch).unwrap();
            probe[e] = x[e] - h;
            let down = obj.loss(&probe, batch).unwrap();
            probe[e] = x[e];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||g - fd|| / ||fd||` (absolute when the reference is zero).
pub fn relative_error(g: &[f64], fd: &[f64]) -> f64 {
    let diff = g.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

/// Blocks to check on `obj`: the full vector plus every layer-aligned block
/// for an mlp, or every block of a few even partitions otherwise.
pub fn blocks_of(obj: &Objective) -> Vec<std::ops::Range<usize>> {
    let d = obj.dim();
    let mut blocks = vec![0..d];
    match obj {
        Objective::Mlp(_) => {
            let layers = obj.layer_ranges();
            for lo in 0..layers.len() {
                for hi in lo..layers.len() {
                    let b = layers[lo].start..layers[hi].end;
                    if b != (0..d) {
                        blocks.push(b);
                    }
                }
            }
        }
        _ => {
            for parts in 2..=d.min(4) {
                let p = lpsgd::partition::BlockPartition::even(d, parts).unwrap();
                blocks.extend((1..=parts).map(|i| p.block(i).unwrap()));
            }
        }
    }
    blocks
}

/// Worst finite-difference relative error over every block and a few batches.
pub fn worst_gradient_error(obj: &Objective, x: &[f64]) -> f64 {
    let n = obj.num_samples();
    let batches: Vec<Vec<usize>> = vec![vec![0], (0..n.min(7)).collect(), vec![n - 1, 0, n - 1], obj.full_batch()];
    let mut worst = 0.0f64;
    for block in blocks_of(obj) {
        for batch in &batches {
            let g = obj.grad_block(x, block.clone(), batch).unwrap().values;
            let fd = finite_difference(obj, x, block.clone(), batch);
            worst = worst.max(relative_error(&g, &fd));
        }
    }
    worst
}

/// Largest difference between a block gradient and the matching slice of the
/// full gradient on the same batch.
pub fn worst_slice_error(obj: &Objective, x: &[f64]) -> f64 {
    let batch: Vec<usize> = (0..obj.num_samples()).step_by(3).collect();
    let full = obj.grad_block(x, 0..obj.dim(), &batch).unwrap().values;
    blocks_of(obj)
        .into_iter()
        .map(|b| {
            let g = obj.grad_block(x, b.clone(), &batch).unwrap().values;
            max_abs_diff(&g, &full[b])
        })
        .fold(0.0, f64::max)
}

use lpsgd::engine::{run_experiment, run_mb_sgd_with, Algo, LogLevel, RunConfig, RunOutput};
use lpsgd::instrumentation::{reconstruct_minor_views, ReplayMode};
use lpsgd::schedules::SyncScheme;

/// Every evaluated iterate of a run, in order.
pub fn trajectory(out: &RunOutput) -> Vec<Vec<f64>> {
    out.evals.iter().map(|e| e.params.clone()).collect()
}

pub fn max_trajectory_diff(a: &RunOutput, b: &RunOutput) -> f64 {
    let (ta, tb) = (trajectory(a), trajectory(b));
    assert_eq!(ta.len(), tb.len(), "trajectory lengths differ");
    ta.iter().zip(&tb).map(|(x, y)| max_abs_diff(x, y)).fold(0.0, f64::max)
}

/// PL-SGD with `K = 1` against MB-SGD on the same seeds, every step compared.
pub fn pl_vs_mb(obj: &Objective, workers: usize, batch: usize, budget: u64, lr: f64, seed: u64) -> f64 {
    let init = obj.init_params(seed);
    let mut mb = RunConfig::new(Algo::MbSgd, workers, 1, batch, budget, lr).unwrap();
    mb.seed = seed;
    mb.eval_interval = 1;
    let mut pl = mb.clone();
    pl.algo = Algo::PlSgd;
    pl.sync = SyncScheme::constant(budget, 1).unwrap();
    let a = run_experiment(&mb, obj, &init).unwrap();
    let b = run_experiment(&pl, obj, &init).unwrap();
    max_trajectory_diff(&a, &b)
}

/// MB-SGD with two workers on minibatches `B1`, `B2` against one worker on
/// the concatenation `B1 ++ B2`.
pub fn mb_double_batch(obj: &Objective, batch: usize, budget: u64, lr: f64, seed: u64) -> f64 {
    use rand::SeedableRng;
    let init = obj.init_params(seed);
    let n = obj.num_samples();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let batches: Vec<[Vec<usize>; 2]> = (0..budget)
        .map(|_| {
            [
                lpsgd::objectives::sample_batch(&mut rng, n, batch),
                lpsgd::objectives::sample_batch(&mut rng, n, batch),
            ]
        })
        .collect();
    let mut two = RunConfig::new(Algo::MbSgd, 2, 1, batch, budget, lr).unwrap();
    two.eval_interval = 1;
    let mut one = RunConfig::new(Algo::MbSgd, 1, 1, 2 * batch, budget, lr).unwrap();
    one.eval_interval = 1;
    let a = run_mb_sgd_with(&two, obj, &init, &mut |s, q| batches[s as usize][q].clone()).unwrap();
    let b = run_mb_sgd_with(&one, obj, &init, &mut |s, _| batches[s as usize].concat()).unwrap();
    max_abs_diff(&a.final_params, &b.final_params).max(max_trajectory_diff(&a, &b))
}

/// Quiescent LAP/LPP run with a full log: the averages rebuilt from the
/// logged gradients against the measured round means. Returns the largest
/// difference and the number of rounds compared.
pub fn quiescent_replay(obj: &Objective, algo: Algo, workers: usize, updaters: usize, budget: u64, seed: u64) -> (f64, usize) {
    let init = obj.init_params(seed);
    let mut cfg = RunConfig::new(algo, workers, updaters, 4, budget, 0.05).unwrap();
    cfg.seed = seed;
    cfg.log = LogLevel::Full;
    cfg.quiescent = true;
    cfg.sync = SyncScheme::new(budget, 4).unwrap();
    let out = run_experiment(&cfg, obj, &init).unwrap();
    let views = reconstruct_minor_views(&out.initial_params, workers, &out.updates, &out.rounds, ReplayMode::Averaged).unwrap();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for r in out.rounds.iter() {
        let mean = r.mean.as_ref().expect("full log carries means");
        worst = worst.max(max_abs_diff(&views.averaged[r.round as usize - 1], mean));
        compared += 1;
    }
    for w in &out.worker_params {
        worst = worst.max(max_abs_diff(views.averaged.last().unwrap(), w));
    }
    (worst, compared)
}
