mod common;

use std::collections::BTreeMap;

use lpsgd::engine::{run_experiment, AllReduce, Algo, BlockPolicy, LogLevel, RunConfig};
use lpsgd::objectives::{Objective, Sampler, SamplingMode, Synthetic};
use lpsgd::schedules::{LrSchedule, SyncScheme};

fn low_noise_quadratic(d: usize, seed: u64) -> Objective {
    let data = Synthetic::LinearTargets {
        samples: 64,
        dim: d,
        noise: 0.01,
    }
    .generate(seed)
    .unwrap();
    Objective::quadratic(data)
}

fn minimizer(obj: &Objective) -> Vec<f64> {
    match obj {
        Objective::Quadratic(q) => q.minimizer(),
        _ => unreachable!(),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn pl_with_k1_matches_mb() {
    for obj in [common::quadratic(40, 6, 1), common::logistic(40, 5, 2)] {
        for workers in [1, 2, 3] {
            let diff = common::pl_vs_mb(&obj, workers, 4, 300, 0.1, 7);
            assert!(diff <= 1e-12, "{:?} Q={workers}: {diff:e}", obj.kind());
        }
    }
}

#[test]
fn mb_two_workers_match_one_worker_with_double_batch() {
    for obj in [common::quadratic(40, 6, 3), common::logistic(40, 5, 4), common::mlp(40, 4, 3, &[5], 5)] {
        let diff = common::mb_double_batch(&obj, 4, 200, 0.1, 11);
        assert!(diff <= 1e-12, "{:?}: {diff:e}", obj.kind());
    }
}

#[test]
fn mb_full_batch_is_gradient_descent() {
    let obj = common::quadratic(20, 3, 6);
    let init = obj.init_params(0);
    let cfg = RunConfig::new(Algo::MbSgd, 1, 1, 20, 50, 0.2).unwrap();
    let full = obj.full_batch();
    let out = lpsgd::engine::run_mb_sgd_with(&cfg, &obj, &init, &mut |_, _| full.clone()).unwrap();
    let mut x = init.clone();
    for _ in 0..50 {
        let g = obj.full_gradient(&x).unwrap();
        for (v, gi) in x.iter_mut().zip(&g) {
            *v -= 0.2 * gi;
        }
    }
    assert!(common::max_abs_diff(&out.final_params, &x) <= 1e-12);
}

#[test]
fn multistep_milestone_damps_the_step() {
    let obj = common::quadratic(10, 2, 1);
    let init = vec![0.0; 2];
    let full = obj.full_batch();
    let mut cfg = RunConfig::new(Algo::MbSgd, 1, 1, 10, 2, 0.5).unwrap();
    cfg.lr = LrSchedule::multistep(0.5, 0.5, 0, 2, vec![1], 0.1).unwrap();
    let out = lpsgd::engine::run_mb_sgd_with(&cfg, &obj, &init, &mut |_, _| full.clone()).unwrap();
    let c = minimizer(&obj);
    // x1 = 0.5 c, x2 = x1 - 0.05 (x1 - c)
    let expect: Vec<f64> = c.iter().map(|ci| 0.5 * ci - 0.05 * (0.5 * ci - ci)).collect();
    assert!(common::max_abs_diff(&out.final_params, &expect) <= 1e-15);
}

#[test]
fn zero_rate_leaves_every_algorithm_unchanged() {
    let obj = common::quadratic(20, 4, 2);
    let init = obj.init_params(1);
    for algo in Algo::ALL {
        let u = if algo.is_baseline() { 1 } else { 2 };
        let cfg = RunConfig::new(algo, 2, u, 4, 200, 0.0).unwrap();
        let out = run_experiment(&cfg, &obj, &init).unwrap();
        for w in &out.worker_params {
            assert_eq!(w, &init, "{algo}");
        }
    }
}

#[test]
fn all_algorithms_converge_on_the_quadratic() {
    let obj = low_noise_quadratic(16, 3);
    let c = minimizer(&obj);
    for algo in Algo::ALL {
        let u = if algo.is_baseline() { 1 } else { 4 };
        let mut cfg = RunConfig::new(algo, 2, u, 8, 6000, 0.0).unwrap();
        cfg.lr = LrSchedule::cosine(0.1, 0.1, 0, 6000).unwrap();
        cfg.seed = 4;
        let out = run_experiment(&cfg, &obj, &vec![0.0; 16]).unwrap();
        let d = dist(&out.final_params, &c);
        assert!(d < 1e-3, "{algo}: {d:e}");
        // Every worker holds the averaged model at the end.
        for w in &out.worker_params {
            assert_eq!(w, &out.final_params);
        }
    }
}

#[test]
fn single_updater_contracts_towards_the_target() {
    let obj = low_noise_quadratic(8, 5);
    let c = minimizer(&obj);
    let mut cfg = RunConfig::new(Algo::LapSgd, 1, 1, 4, 10_000, 0.0).unwrap();
    cfg.lr = LrSchedule::cosine(0.05, 0.05, 0, 10_000).unwrap();
    let init = vec![1.0; 8];
    let out = run_experiment(&cfg, &obj, &init).unwrap();
    assert!(dist(&out.final_params, &c) < 1e-3);
}

#[test]
fn workers_process_exactly_the_budget() {
    let obj = common::quadratic(30, 6, 1);
    for (algo, u) in [(Algo::LapSgd, 4), (Algo::LppSgd, 3), (Algo::MbSgd, 1), (Algo::PlSgd, 1)] {
        let cfg = RunConfig::new(algo, 3, u, 2, 777, 0.01).unwrap();
        let out = run_experiment(&cfg, &obj, &vec![0.0; 6]).unwrap();
        assert_eq!(out.minibatches, vec![777; 3], "{algo}");
    }
}

#[test]
fn forced_partial_blocks_evolve_independently() {
    // The quadratic is separable, so with every step restricted to the
    // updater's own block each block is a sequential block-coordinate SGD.
    let obj = common::quadratic(25, 6, 9);
    let init = obj.init_params(2);
    let mut cfg = RunConfig::new(Algo::LppSgd, 1, 2, 3, 500, 0.05).unwrap();
    cfg.block_policy = BlockPolicy::PartialOnly;
    cfg.seed = 13;
    cfg.log = LogLevel::Full;
    let out = run_experiment(&cfg, &obj, &init).unwrap();
    let part = cfg.resolve_partition(&obj).unwrap();
    let mut steps: BTreeMap<usize, usize> = BTreeMap::new();
    for u in &out.updates {
        *steps.entry(u.rank).or_default() += 1;
    }
    assert_eq!(steps.values().sum::<usize>(), 500);
    let mut expect = init.clone();
    for rank in 1..=2 {
        let block = part.block(rank).unwrap();
        let mut sampler = Sampler::new(SamplingMode::Iid, obj.num_samples(), cfg.seed, rank - 1, 2);
        for _ in 0..steps[&rank] {
            let ids = sampler.next_batch(3);
            let g = obj.grad_block(&expect, block.clone(), &ids).unwrap().values;
            for (v, gi) in expect[block.clone()].iter_mut().zip(&g) {
                *v -= 0.05 * gi;
            }
        }
    }
    assert!(common::max_abs_diff(&out.final_params, &expect) <= 1e-12);
}

#[test]
fn averaging_deltas_sum_to_zero() {
    let obj = common::quadratic(30, 8, 4);
    for workers in [2, 3] {
        let mut cfg = RunConfig::new(Algo::LapSgd, workers, 3, 2, 400, 0.05).unwrap();
        cfg.log = LogLevel::Full;
        cfg.interleave = true;
        let out = run_experiment(&cfg, &obj, &vec![0.0; 8]).unwrap();
        let mut by_round: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &out.rounds {
            let sum = by_round.entry(r.round).or_insert_with(|| vec![0.0; 8]);
            for (s, d) in sum.iter_mut().zip(r.delta.as_ref().unwrap()) {
                *s += d;
            }
        }
        assert!(by_round.len() > 1);
        for (j, sum) in by_round {
            let worst = sum.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(worst <= workers as f64 * 8.0 * 1e-12, "round {j}: {worst:e}");
        }
    }
}

#[test]
fn allreduce_examples() {
    let ar = AllReduce::new(2);
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(|| ar.reduce(1, vec![3.0, 5.0], false).unwrap());
        let a = ar.reduce(0, vec![1.0, 3.0], false).unwrap();
        (a, h.join().unwrap())
    });
    assert_eq!(*a.mean, vec![2.0, 4.0]);
    assert_eq!(a.mean, b.mean);
    let delta: Vec<f64> = a.mean.iter().zip([1.0, 3.0]).map(|(m, v)| m - v).collect();
    assert_eq!(delta, vec![1.0, 1.0]);
    let single = AllReduce::new(1).reduce(0, vec![7.0, -1.0], false).unwrap();
    assert_eq!(*single.mean, vec![7.0, -1.0]);
}

#[test]
fn single_worker_averaging_is_a_no_op() {
    let obj = common::quadratic(20, 4, 1);
    let mut cfg = RunConfig::new(Algo::LapSgd, 1, 2, 2, 300, 0.05).unwrap();
    cfg.log = LogLevel::Full;
    cfg.sync = SyncScheme::constant(300, 1).unwrap();
    let out = run_experiment(&cfg, &obj, &vec![0.0; 4]).unwrap();
    assert!(!out.rounds.is_empty());
    for r in &out.rounds {
        assert!(r.delta.as_ref().unwrap().iter().all(|&d| d == 0.0));
    }
}

#[test]
fn baselines_are_deterministic() {
    let obj = common::mlp(40, 4, 3, &[6], 1);
    let init = obj.init_params(0);
    for algo in [Algo::MbSgd, Algo::PlSgd] {
        let mut cfg = RunConfig::new(algo, 2, 1, 4, 300, 0.1).unwrap();
        cfg.seed = 7;
        cfg.eval_interval = 20;
        let a = run_experiment(&cfg, &obj, &init).unwrap();
        let b = run_experiment(&cfg, &obj, &init).unwrap();
        assert_eq!(a.final_params, b.final_params);
        let strip = |o: &lpsgd::engine::RunOutput| {
            o.metrics(&obj)
                .unwrap()
                .into_iter()
                .map(|mut r| {
                    r.wall_ms = 0.0;
                    r
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b), "{algo}");
    }
}

#[test]
fn quiescent_replay_matches_measured_averages() {
    for (algo, q, u) in [(Algo::LapSgd, 2, 3), (Algo::LppSgd, 3, 2), (Algo::LapSgd, 1, 1)] {
        let obj = common::quadratic(30, 12, 2);
        let (err, rounds) = common::quiescent_replay(&obj, algo, q, u, 300, 5);
        assert!(rounds > 0);
        assert!(err <= 1e-12, "{algo} Q={q} U={u}: {err:e}");
    }
    let obj = common::mlp(30, 4, 3, &[4, 4], 3);
    let (err, _) = common::quiescent_replay(&obj, Algo::LppSgd, 2, 3, 200, 1);
    assert!(err <= 1e-12, "mlp: {err:e}");
}

#[test]
fn lpp_uses_fewer_flops_than_lap() {
    let obj = common::mlp(64, 8, 8, &[8, 8, 8], 2);
    let run = |algo| {
        let cfg = RunConfig::new(algo, 2, 4, 4, 400, 0.05).unwrap();
        run_experiment(&cfg, &obj, &obj.init_params(0)).unwrap()
    };
    let (lap, lpp) = (run(Algo::LapSgd), run(Algo::LppSgd));
    assert_eq!(lap.minibatches, lpp.minibatches);
    assert!(lpp.flops < lap.flops);
}

#[test]
fn invalid_configs_are_rejected() {
    let obj = common::quadratic(10, 4, 0);
    let init = vec![0.0; 4];
    assert!(RunConfig::new(Algo::MbSgd, 2, 4, 4, 10, 0.1).unwrap().validate(&obj).is_err());
    let mut cfg = RunConfig::new(Algo::LapSgd, 2, 2, 4, 10, 0.1).unwrap();
    cfg.block_policy = BlockPolicy::Alternating;
    assert!(run_experiment(&cfg, &obj, &init).is_err());
    let cfg = RunConfig::new(Algo::LapSgd, 0, 2, 4, 10, 0.1).unwrap();
    assert!(run_experiment(&cfg, &obj, &init).is_err());
    let cfg = RunConfig::new(Algo::LapSgd, 1, 1, 4, 10, 0.1).unwrap();
    assert!(run_experiment(&cfg, &obj, &[0.0; 3]).is_err());
}
