//! Synchronous baselines, simulated deterministically on the calling thread.

use std::time::{Duration, Instant};

use super::{eval_due, DelayCounts, EvalPoint, RunConfig, RunOutput};
use crate::error::Result;
use crate::objectives::{Objective, Sampler};

fn worker_samplers(cfg: &RunConfig, obj: &Objective) -> Vec<Sampler> {
    (0..cfg.workers)
        .map(|q| Sampler::new(cfg.sampling, obj.num_samples(), cfg.seed, q, cfg.workers))
        .collect()
}

struct Clock {
    elapsed: Duration,
    started: Instant,
}

impl Clock {
    fn start() -> Self {
        Clock {
            elapsed: Duration::ZERO,
            started: Instant::now(),
        }
    }

    fn pause(&mut self) {
        self.elapsed += self.started.elapsed();
    }

    fn resume(&mut self) {
        self.started = Instant::now();
    }

    fn ms(&self) -> f64 {
        self.elapsed.as_secs_f64() * 1e3
    }
}

/// Minibatch data-parallel SGD: every step, all workers compute a gradient
/// at the same model and the model moves by the mean gradient.
pub fn run_mb_sgd(cfg: &RunConfig, obj: &Objective, init: &[f64]) -> Result<RunOutput> {
    let mut samplers = worker_samplers(cfg, obj);
    let batch = cfg.batch;
    run_mb_sgd_with(cfg, obj, init, &mut |_, q| samplers[q].next_batch(batch))
}

/// [`run_mb_sgd`] with caller-supplied minibatches `batches(step, worker)`.
pub fn run_mb_sgd_with(
    cfg: &RunConfig,
    obj: &Objective,
    init: &[f64],
    batches: &mut dyn FnMut(u64, usize) -> Vec<usize>,
) -> Result<RunOutput> {
    let d = obj.dim();
    let q = cfg.workers;
    let mut x = init.to_vec();
    let mut flops = 0u64;
    let mut backward = 0u64;
    let mut evals = vec![eval_point(0.0, 0, 0, 0, &x)];
    let mut next_eval = cfg.eval_interval;
    let mut mean = vec![0.0; d];
    let mut clock = Clock::start();
    for step in 0..cfg.budget {
        mean.iter_mut().for_each(|v| *v = 0.0);
        for worker in 0..q {
            let ids = batches(step, worker);
            let g = obj.grad_block(&x, 0..d, &ids)?;
            flops += g.flops;
            backward += g.backward_flops;
            mean.iter_mut().zip(&g.values).for_each(|(m, v)| *m += v);
        }
        let lr = cfg.lr.lr_at(step);
        let inv_q = 1.0 / q as f64;
        x.iter_mut()
            .zip(&mean)
            .for_each(|(xi, m)| *xi -= lr * (m * inv_q));
        let done = step + 1;
        if eval_due(done, &mut next_eval, cfg.eval_interval) && done < cfg.budget {
            clock.pause();
            evals.push(eval_point(clock.ms(), done * q as u64, done, flops, &x));
            clock.resume();
        }
    }
    clock.pause();
    evals.push(eval_point(clock.ms(), cfg.total_minibatches(), cfg.budget, flops, &x));
    Ok(RunOutput {
        algo: cfg.algo,
        seed: cfg.seed,
        dim: d,
        workers: q,
        batch: cfg.batch,
        initial_params: init.to_vec(),
        final_params: x.clone(),
        worker_params: vec![x; q],
        wall: clock.elapsed,
        flops,
        backward_flops: backward,
        minibatches: vec![cfg.budget; q],
        partial_steps: 0,
        block_steps: Vec::new(),
        updates: Vec::new(),
        rounds: Vec::new(),
        evals,
        delay: DelayCounts::default(),
    })
}

/// Post-local SGD: workers run sequential SGD on private models and
/// average them (blocking) whenever `K` local steps have accumulated.
pub fn run_pl_sgd(cfg: &RunConfig, obj: &Objective, init: &[f64]) -> Result<RunOutput> {
    let d = obj.dim();
    let q = cfg.workers;
    let mut samplers = worker_samplers(cfg, obj);
    let mut models = vec![init.to_vec(); q];
    let mut flops = 0u64;
    let mut backward = 0u64;
    let mut round = 0u64;
    let mut since = 0u64;
    let mut evals = vec![eval_point(0.0, 0, 0, 0, init)];
    let mut next_eval = cfg.eval_interval;
    let mut clock = Clock::start();
    for step in 0..cfg.budget {
        let lr = cfg.lr.lr_at(step);
        for (worker, x) in models.iter_mut().enumerate() {
            let ids = samplers[worker].next_batch(cfg.batch);
            let g = obj.grad_block(x, 0..d, &ids)?;
            flops += g.flops;
            backward += g.backward_flops;
            x.iter_mut().zip(&g.values).for_each(|(xi, gi)| *xi -= lr * gi);
        }
        since += 1;
        let done = step + 1;
        if since >= cfg.sync.sync_k(done) || done == cfg.budget {
            let mean = average(&models);
            models.iter_mut().for_each(|m| m.copy_from_slice(&mean));
            round += 1;
            since = 0;
        }
        if eval_due(done, &mut next_eval, cfg.eval_interval) && done < cfg.budget {
            clock.pause();
            let mean = average(&models);
            evals.push(eval_point(clock.ms(), done * q as u64, round, flops, &mean));
            clock.resume();
        }
    }
    clock.pause();
    let final_params = models[0].clone();
    evals.push(eval_point(
        clock.ms(),
        cfg.total_minibatches(),
        round,
        flops,
        &final_params,
    ));
    Ok(RunOutput {
        algo: cfg.algo,
        seed: cfg.seed,
        dim: d,
        workers: q,
        batch: cfg.batch,
        initial_params: init.to_vec(),
        final_params,
        worker_params: models,
        wall: clock.elapsed,
        flops,
        backward_flops: backward,
        minibatches: vec![cfg.budget; q],
        partial_steps: 0,
        block_steps: Vec::new(),
        updates: Vec::new(),
        rounds: Vec::new(),
        evals,
        delay: DelayCounts::default(),
    })
}

fn average(models: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = models[0].clone();
    for m in &models[1..] {
        mean.iter_mut().zip(m).for_each(|(a, b)| *a += b);
    }
    let q = models.len() as f64;
    mean.iter_mut().for_each(|v| *v /= q);
    mean
}

fn eval_point(wall_ms: f64, minibatches: u64, round: u64, flops: u64, x: &[f64]) -> EvalPoint {
    EvalPoint {
        wall_ms,
        minibatches,
        round,
        flops,
        p_hat: 1.0,
        params: x.to_vec(),
    }
}
