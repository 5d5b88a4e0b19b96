use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Overrides, ScheduleKind};
use super::presets::{preset, Preset, PresetKind, Targets};
use crate::engine::{run_experiment, Algo, RunOutput};
use crate::error::{Error, Result};
use crate::instrumentation::{
    consistency_stats, elastic_consistency_check, ergodic_rate_check, ergodic_statistic,
    reconstruct_minor_views, ConsistencyReport, ConsistencyStats, DelayStats, RateReport,
    ReplayMode,
};
use crate::metrics::{self, MetricsRow, SummaryRow};
use crate::objectives::{estimate_moment_bounds, stream_seed, BatchSize, Objective};

/// Outcome of one (algorithm, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub algo: Algo,
    pub seed: u64,
    pub updaters: usize,
    pub metrics: Vec<MetricsRow>,
    pub wall_ms: f64,
    pub flops: u64,
    pub backward_flops: u64,
    pub minibatches: u64,
    pub partial_steps: u64,
    pub rounds: u64,
    pub final_loss: f64,
    /// Quadratic only: `||x - c||`.
    pub distance: Option<f64>,
    /// Quadratic only: `f(x) - f(c)`.
    pub excess_loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// Async runs with provenance tracking.
    pub min_p_hat: Option<f64>,
    pub p_hat: Option<f64>,
    /// Runs with partial steps: measured backward-flop savings on those steps.
    pub measured_savings: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: String,
    pub runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
    pub checks: Vec<Check>,
    pub rate: Option<(RateReport, Vec<RateSample>)>,
    pub consistency: Option<ConsistencyReport>,
}

/// One rate-sweep run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateSample {
    pub budget: u64,
    pub seed: u64,
    pub rounds: u64,
    pub statistic: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("== {} ==\n", self.name);
        if !self.summary.is_empty() {
            s.push_str(&metrics::format_summary(&self.summary));
        }
        for r in &self.runs {
            let _ = write!(
                s,
                "{:<8} seed {:<3} loss {:.6e} wall {:>9.1} ms flops {:>12} rounds {:>6}",
                r.algo.as_str(),
                r.seed,
                r.final_loss,
                r.wall_ms,
                r.flops,
                r.rounds
            );
            if let Some(d) = r.distance {
                let _ = write!(s, " |x-c| {d:.3e}");
            }
            if let Some(a) = r.accuracy {
                let _ = write!(s, " acc {a:.4}");
            }
            if let Some(p) = r.min_p_hat {
                let _ = write!(s, " min_p {p:.4}");
            }
            if let Some(v) = r.measured_savings {
                let _ = write!(s, " savings {v:.4}");
            }
            s.push('\n');
        }
        if let Some((rate, _)) = &self.rate {
            s.push_str(&rate.to_text());
        }
        if let Some(c) = &self.consistency {
            s.push_str(&c.to_text());
        }
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }

    /// Writes per-run metrics CSVs, the summary and any sweep tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.runs {
            metrics::save_csv(dir.join(format!("{}_seed{}.csv", r.algo.as_str(), r.seed)), &r.metrics)?;
        }
        if !self.summary.is_empty() {
            metrics::write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?, &self.summary)?;
        }
        if let Some((rate, samples)) = &self.rate {
            let mut w = csv::Writer::from_path(dir.join("rate.csv"))?;
            for s in samples {
                w.serialize(s)?;
            }
            w.flush()?;
            let mut w = csv::Writer::from_path(dir.join("rate_fit.csv"))?;
            w.write_record(["slope", "intercept", "r_squared", "passed"])?;
            let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
            w.write_record([
                f(rate.slope),
                f(rate.intercept),
                f(rate.r_squared),
                rate.passed().to_string(),
            ])?;
            w.flush()?;
        }
        if let Some(c) = &self.consistency {
            let mut w = csv::Writer::from_path(dir.join("consistency.csv"))?;
            w.write_record([
                "alpha",
                "good_events",
                "mean_distance",
                "mean_distance_se",
                "mean_distance_sq",
                "b",
                "bound",
                "under_bound",
                "under_bound_sq",
            ])?;
            for r in &c.rows {
                w.write_record([
                    r.alpha.to_string(),
                    r.good_events.to_string(),
                    r.mean_distance.to_string(),
                    r.mean_distance_se.to_string(),
                    r.mean_distance_sq.to_string(),
                    r.b.to_string(),
                    r.bound.to_string(),
                    r.under_bound.to_string(),
                    r.under_bound_sq.to_string(),
                ])?;
            }
            w.flush()?;
        }
        std::fs::write(dir.join("summary.txt"), self.to_text())?;
        Ok(())
    }
}

/// Quadratic minimizer, if the objective has a closed form one.
fn minimizer(obj: &Objective) -> Option<Vec<f64>> {
    match obj {
        Objective::Quadratic(q) => Some(q.minimizer()),
        _ => None,
    }
}

/// `1 - mean_i(c_i) / c_0`, where `c_i` is the measured backward flops per
/// step on block `i`. Blocks are weighted equally whatever their step count.
/// `None` unless the objective is layered and every block took a step.
pub fn measured_savings(obj: &Objective, out: &RunOutput) -> Result<Option<f64>> {
    if !matches!(obj, Objective::Mlp(_)) || out.block_steps.len() < 2 {
        return Ok(None);
    }
    let full = obj.backward_cost(&(0..obj.dim()))? as f64 * out.batch as f64;
    let per_block: Option<Vec<f64>> = out.block_steps[1..]
        .iter()
        .map(|b| (b.steps > 0).then(|| b.backward_flops as f64 / b.steps as f64))
        .collect();
    Ok(per_block.map(|c| 1.0 - c.iter().sum::<f64>() / (c.len() as f64 * full)))
}

/// Runs `cfg` once for `seed` and condenses the output.
pub fn run_seed(cfg: &ExperimentConfig, obj: &Objective, seed: u64) -> Result<(SeedRun, RunOutput)> {
    let run_cfg = cfg.run_config(seed)?;
    let init = obj.init_params(seed);
    let out = run_experiment(&run_cfg, obj, &init)?;
    let rows = out.metrics(obj)?;
    let final_loss = obj.full_loss(&out.final_params)?;
    let (distance, excess_loss) = match minimizer(obj) {
        Some(c) => {
            let d = out
                .final_params
                .iter()
                .zip(&c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (Some(d), Some(final_loss - obj.full_loss(&c)?))
        }
        None => (None, None),
    };
    let tracked = !out.updates.is_empty() && out.updates.iter().any(|u| !u.provenance.is_empty());
    let (min_p_hat, p_hat) = if tracked {
        let stats = DelayStats::from_run(&out)?;
        (Some(stats.min_p_hat()), Some(stats.p_hat()))
    } else {
        (None, None)
    };
    let minibatches: u64 = out.minibatches.iter().sum();
    let measured_savings = measured_savings(obj, &out)?;
    let run = SeedRun {
        algo: out.algo,
        seed,
        updaters: run_cfg.updaters,
        wall_ms: out.wall.as_secs_f64() * 1e3,
        flops: out.flops,
        backward_flops: out.backward_flops,
        minibatches,
        partial_steps: out.partial_steps,
        rounds: out.rounds_completed(),
        final_loss,
        distance,
        excess_loss,
        accuracy: obj.accuracy(&out.final_params),
        min_p_hat,
        p_hat,
        measured_savings,
        metrics: rows,
    };
    Ok((run, out))
}

/// Runs a configuration file's algorithm over its seed list.
pub fn run_config(cfg: &ExperimentConfig) -> Result<Report> {
    let obj = cfg.objective(cfg.dataset()?)?;
    let mut runs = Vec::new();
    for &seed in cfg.seeds() {
        runs.push(run_seed(cfg, &obj, seed)?.0);
    }
    let mut checks = Vec::new();
    generic_checks(&runs, &mut checks);
    Ok(Report {
        name: format!("{} ({:?})", cfg.run.algo, cfg.objective.kind),
        summary: summarize(&runs),
        runs,
        checks,
        rate: None,
        consistency: None,
    })
}

fn summarize(runs: &[SeedRun]) -> Vec<SummaryRow> {
    let tables: Vec<Vec<MetricsRow>> = runs.iter().map(|r| r.metrics.clone()).collect();
    metrics::summarize(&tables)
}

fn generic_checks(runs: &[SeedRun], checks: &mut Vec<Check>) {
    for r in runs {
        let name = format!("{} seed {}", r.algo, r.seed);
        checks.push(Check {
            name: format!("{name}: samples non-decreasing, finite loss"),
            passed: metrics::samples_monotone(&r.metrics) && r.final_loss.is_finite(),
            detail: format!("final loss {:.6e}", r.final_loss),
        });
    }
}

fn target_checks(runs: &[SeedRun], t: &Targets, checks: &mut Vec<Check>) {
    for r in runs {
        let name = format!("{} seed {}", r.algo, r.seed);
        if let (Some(max), Some(d)) = (t.max_distance, r.distance) {
            checks.push(Check {
                name: format!("{name}: |x - c| < {max:e}"),
                passed: d < max,
                detail: format!("{d:.4e}"),
            });
        }
        if let (Some(max), Some(e)) = (t.max_excess_loss, r.excess_loss) {
            checks.push(Check {
                name: format!("{name}: f(x) - f(c) < {max:e}"),
                passed: e < max,
                detail: format!("{e:.4e}"),
            });
        }
        if let (Some(min), Some(a)) = (t.min_accuracy, r.accuracy) {
            checks.push(Check {
                name: format!("{name}: train accuracy >= {min}"),
                passed: a >= min,
                detail: format!("{a:.4}"),
            });
        }
        if let (Some(min), Some(p)) = (t.min_p_hat, r.min_p_hat) {
            checks.push(Check {
                name: format!("{name}: min p_hat > {min}"),
                passed: p > min,
                detail: format!("{p:.4}"),
            });
        }
    }
    if t.lpp_saves_flops {
        for lpp in runs.iter().filter(|r| r.algo == Algo::LppSgd) {
            if let Some(lap) = runs.iter().find(|r| r.algo == Algo::LapSgd && r.seed == lpp.seed) {
                checks.push(Check {
                    name: format!("seed {}: lpp_sgd flops < lap_sgd flops", lpp.seed),
                    passed: lpp.flops < lap.flops && lpp.minibatches == lap.minibatches,
                    detail: format!("{} vs {} ({} samples each)", lpp.flops, lap.flops, lpp.minibatches),
                });
            }
        }
    }
}

/// Configuration of `p` for `algo`, with CLI overrides applied.
pub fn preset_config(p: &Preset, algo: Algo, o: &Overrides) -> Result<ExperimentConfig> {
    let mut c = p.config.clone();
    c.run.algo = algo;
    c.run.updaters = Some(if algo.is_baseline() { 1 } else { p.async_updaters });
    c.run.block_policy = None;
    let mut o = o.clone();
    // `--updaters` on a multi-algorithm preset targets the async runs; with
    // an explicit baseline `--algo` it goes through validation unchanged.
    if algo.is_baseline() && o.algo.is_none() {
        o.updaters = None;
    }
    o.algo = None;
    c.with_overrides(&o)
}

/// Runs a named preset. `out`, when given, receives the artifacts under
/// `<out>/<preset>/`.
pub fn run_preset(name: &str, o: &Overrides) -> Result<Report> {
    let p = preset(name)?;
    let algos: Vec<Algo> = match o.algo {
        Some(a) => vec![a],
        None => p.algos.clone(),
    };
    let report = match &p.kind {
        PresetKind::Standard => run_standard(&p, &algos, o)?,
        PresetKind::RateSweep { budgets, c } => run_rate_sweep(&p, budgets, *c, o)?,
        PresetKind::ConsistencySweep { alphas } => run_consistency_sweep(&p, alphas, o)?,
    };
    Ok(report)
}

/// Directory a preset's artifacts go to.
pub fn preset_dir(name: &str, o: &Overrides) -> Result<PathBuf> {
    let p = preset(name)?;
    let root = o.out.clone().unwrap_or_else(|| p.config.output.dir.clone());
    Ok(root.join(name))
}

fn run_standard(p: &Preset, algos: &[Algo], o: &Overrides) -> Result<Report> {
    let base = preset_config(p, algos[0], o)?;
    let obj = base.objective(base.dataset()?)?;
    let mut runs = Vec::new();
    for &algo in algos {
        let cfg = preset_config(p, algo, o)?;
        for &seed in cfg.seeds() {
            runs.push(run_seed(&cfg, &obj, seed)?.0);
        }
    }
    let mut checks = Vec::new();
    generic_checks(&runs, &mut checks);
    target_checks(&runs, &p.targets, &mut checks);
    Ok(Report {
        name: p.name.to_string(),
        summary: summarize(&runs),
        runs,
        checks,
        rate: None,
        consistency: None,
    })
}

fn run_rate_sweep(p: &Preset, budgets: &[u64], c: f64, o: &Overrides) -> Result<Report> {
    let base = preset_config(p, Algo::LapSgd, o)?;
    let obj = base.objective(base.dataset()?)?;
    let mut series: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut samples = Vec::new();
    let mut runs = Vec::new();
    for &j in budgets {
        let mut cfg = base.clone();
        cfg.run.budget = 64 * j;
        cfg.run.tst = Some(0);
        cfg.run.eval_interval = Some(0);
        cfg.run.round_budget = Some(j);
        cfg.lr.schedule = ScheduleKind::Constant;
        cfg.lr.alpha0 = c / (j as f64).sqrt();
        cfg.lr.peak = None;
        cfg.lr.warmup = 0;
        cfg.sync.h = 1;
        cfg.sync.switch_point = Some(0);
        cfg.sync.warm_period = Some(0);
        for &seed in base.seeds() {
            let (run, out) = run_seed(&cfg, &obj, seed)?;
            let means: Vec<Vec<f64>> = out
                .rounds
                .iter()
                .filter(|r| r.worker == 0 && r.round <= j)
                .filter_map(|r| r.mean.clone())
                .collect();
            if (means.len() as u64) < j {
                return Err(Error::Run(format!(
                    "rate sweep: {} of {j} round means captured (log level too low?)",
                    means.len()
                )));
            }
            let stat = ergodic_statistic(&obj, &means)?;
            series.entry(j).or_default().push(stat);
            samples.push(RateSample {
                budget: j,
                seed,
                rounds: run.rounds,
                statistic: stat,
            });
            runs.push(run);
        }
    }
    let rate = ergodic_rate_check(&series)?;
    let checks = vec![Check {
        name: "ergodic rate slope <= -0.4".into(),
        passed: rate.passed(),
        detail: rate
            .slope
            .map_or_else(|| "undefined".into(), |s| format!("slope {s:.4}")),
    }];
    Ok(Report {
        name: p.name.to_string(),
        summary: Vec::new(),
        runs,
        checks,
        rate: Some((rate, samples)),
        consistency: None,
    })
}

/// Replayed consistency statistics of one constant-rate configuration,
/// pooled over its seeds.
pub fn consistency_for_alpha(cfg: &ExperimentConfig, obj: &Objective, alpha: f64) -> Result<(ConsistencyStats, Vec<SeedRun>)> {
    let mut cfg = cfg.clone();
    cfg.lr.schedule = ScheduleKind::Constant;
    cfg.lr.alpha0 = alpha;
    cfg.lr.peak = None;
    cfg.lr.warmup = 0;
    let mut pooled: Option<ConsistencyStats> = None;
    let mut points = Vec::new();
    let mut runs = Vec::new();
    for &seed in cfg.seeds() {
        let (run, out) = run_seed(&cfg, obj, seed)?;
        let views = reconstruct_minor_views(
            &out.initial_params,
            out.workers,
            &out.updates,
            &out.rounds,
            ReplayMode::Logged,
        )?;
        let delay = DelayStats::from_run(&out)?;
        let st = consistency_stats(alpha, &views, &delay, 0.0);
        let stride = (out.updates.len() / 20).max(1);
        points.extend(out.updates.iter().step_by(stride).filter_map(|u| u.snapshot.clone()));
        match &mut pooled {
            None => pooled = Some(st),
            Some(p) => {
                p.good_distances.extend(st.good_distances);
                p.excluded += st.excluded;
                p.k_bar = p.k_bar.max(st.k_bar);
            }
        }
        runs.push(run);
    }
    let mut pooled = pooled.ok_or_else(|| Error::config("seeds", "need at least one seed"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seeds()[0], &[0xC0, alpha.to_bits()]));
    let bounds = estimate_moment_bounds(obj, &points, &[0..obj.dim()], BatchSize::Sampled(cfg.run.batch), 30, &mut rng)?;
    pooled.m_hat = bounds.m_hat;
    Ok((pooled, runs))
}

fn run_consistency_sweep(p: &Preset, alphas: &[f64], o: &Overrides) -> Result<Report> {
    let base = preset_config(p, Algo::LapSgd, o)?;
    let obj = base.objective(base.dataset()?)?;
    let mut stats = Vec::new();
    let mut runs = Vec::new();
    for &alpha in alphas {
        let (st, r) = consistency_for_alpha(&base, &obj, alpha)?;
        stats.push(st);
        runs.extend(r);
    }
    let report = elastic_consistency_check(&stats)?;
    let checks = vec![
        Check {
            name: "consistency distance monotone in alpha".into(),
            passed: report.monotone && report.insufficient.is_empty(),
            detail: format!(
                "{:?}",
                report.rows.iter().map(|r| r.mean_distance).collect::<Vec<_>>()
            ),
        },
        Check {
            name: "mean distance below alpha^2 B^2".into(),
            passed: report.rows.iter().all(|r| r.under_bound),
            detail: format!("{:?}", report.rows.iter().map(|r| r.bound).collect::<Vec<_>>()),
        },
    ];
    Ok(Report {
        name: p.name.to_string(),
        summary: Vec::new(),
        runs,
        checks,
        rate: None,
        consistency: Some(report),
    })
}
