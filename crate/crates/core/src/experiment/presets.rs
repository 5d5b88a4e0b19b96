//! Named desk-scale experiments.

use super::config::{ExperimentConfig, Generator, ScheduleKind};
use crate::engine::{Algo, LogLevel};
use crate::error::{Error, Result};
use crate::objectives::LossKind;

#[derive(Debug, Clone, PartialEq)]
pub enum PresetKind {
    /// Every listed algorithm on every seed.
    Standard,
    /// Round budgets `J` with constant rate `c / sqrt(J)` and `K = 1`.
    RateSweep { budgets: Vec<u64>, c: f64 },
    /// Constant rates, full event log, replayed consistency distances.
    ConsistencySweep { alphas: Vec<f64> },
}

/// Pass/fail thresholds checked after a standard preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Targets {
    /// Quadratic: `||x - c||` at the end.
    pub max_distance: Option<f64>,
    /// Quadratic: `f(x) - f(c)` at the end.
    pub max_excess_loss: Option<f64>,
    pub min_accuracy: Option<f64>,
    /// Async runs: minimum running good-event fraction.
    pub min_p_hat: Option<f64>,
    /// lpp_sgd must use fewer flops than lap_sgd on the same seed.
    pub lpp_saves_flops: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub algos: Vec<Algo>,
    /// Updaters per worker for lap/lpp (baselines use 1).
    pub async_updaters: usize,
    pub config: ExperimentConfig,
    pub kind: PresetKind,
    pub targets: Targets,
}

pub const PRESET_NAMES: [&str; 6] = [
    "quadratic-smoke",
    "logreg-blobs",
    "mlp-2layer",
    "mlp-4layer",
    "rate-sweep",
    "consistency-sweep",
];

/// Presets run with their default scheduler (the ones the p-hat target
/// applies to).
pub const DEFAULT_PRESETS: [&str; 4] = ["quadratic-smoke", "logreg-blobs", "mlp-2layer", "mlp-4layer"];

pub const P_HAT_FLOOR: f64 = 0.05;

fn base(kind: LossKind, budget: u64) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::new(Algo::LapSgd, kind)?;
    c.run.budget = budget;
    c.run.tst = Some(budget / 10);
    c.run.eval_interval = Some(budget / 20);
    c.sync.switch_point = Some(budget / 2);
    c.sync.warm_period = Some(budget / 2);
    Ok(c)
}

fn quadratic_base() -> Result<ExperimentConfig> {
    let mut c = base(LossKind::Quadratic, 20_000)?;
    c.data.generator = Some(Generator::LinearRegression);
    c.data.samples = 256;
    c.data.dim = 64;
    c.data.noise = 0.01;
    c.data.seed = 1;
    c.run.batch = 16;
    c.lr.schedule = ScheduleKind::Cosine;
    c.lr.alpha0 = 0.1;
    Ok(c)
}

fn mlp2_base(budget: u64) -> Result<ExperimentConfig> {
    let mut c = base(LossKind::Mlp, budget)?;
    c.objective.hidden = vec![16];
    c.data.generator = Some(Generator::GaussianBlobs);
    c.data.classes = 4;
    c.data.samples = 512;
    c.data.dim = 8;
    c.data.separation = 1.5;
    c.data.seed = 3;
    c.run.batch = 16;
    c.lr.schedule = ScheduleKind::Cosine;
    c.lr.alpha0 = 0.1;
    Ok(c)
}

pub fn preset(name: &str) -> Result<Preset> {
    let all = Algo::ALL.to_vec();
    let p = match name {
        "quadratic-smoke" => Preset {
            name: "quadratic-smoke",
            description: "strongly convex quadratic, d = 64, T = 2e4, all four algorithms",
            algos: all,
            async_updaters: 4,
            config: quadratic_base()?,
            kind: PresetKind::Standard,
            targets: Targets {
                max_distance: Some(1e-3),
                max_excess_loss: Some(1e-4),
                min_p_hat: Some(P_HAT_FLOOR),
                ..Targets::default()
            },
        },
        "logreg-blobs" => {
            let mut c = base(LossKind::LogisticRegression, 4000)?;
            c.data.generator = Some(Generator::GaussianBlobs);
            c.data.classes = 2;
            c.data.samples = 512;
            c.data.dim = 8;
            c.data.separation = 4.0;
            c.data.seed = 2;
            c.lr.alpha0 = 0.5;
            Preset {
                name: "logreg-blobs",
                description: "logistic regression on separable two-class blobs",
                algos: all,
                async_updaters: 4,
                config: c,
                kind: PresetKind::Standard,
                targets: Targets {
                    min_accuracy: Some(1.0),
                    min_p_hat: Some(P_HAT_FLOOR),
                    ..Targets::default()
                },
            }
        }
        "mlp-2layer" => Preset {
            name: "mlp-2layer",
            description: "one-hidden-layer tanh mlp on four-class blobs, U = 2 (one layer per block)",
            algos: all,
            async_updaters: 2,
            config: mlp2_base(4000)?,
            kind: PresetKind::Standard,
            targets: Targets {
                min_p_hat: Some(P_HAT_FLOOR),
                ..Targets::default()
            },
        },
        "mlp-4layer" => {
            let mut c = base(LossKind::Mlp, 4000)?;
            c.objective.hidden = vec![16, 16, 16];
            c.data.generator = Some(Generator::GaussianBlobs);
            c.data.classes = 16;
            c.data.samples = 1024;
            c.data.dim = 16;
            c.data.separation = 2.0;
            c.data.seed = 4;
            c.run.batch = 16;
            c.lr.alpha0 = 0.05;
            Preset {
                name: "mlp-4layer",
                description: "four uniform 16-wide layers, one block per updater (U = 4)",
                algos: all,
                async_updaters: 4,
                config: c,
                kind: PresetKind::Standard,
                targets: Targets {
                    min_p_hat: Some(P_HAT_FLOOR),
                    lpp_saves_flops: true,
                    ..Targets::default()
                },
            }
        }
        "rate-sweep" => {
            let mut c = mlp2_base(1000)?;
            c.run.batch = 8;
            c.run.seeds = Some((0..5).collect());
            c.run.repetitions = 5;
            c.run.log = LogLevel::Rounds;
            c.run.provenance_sample = 0;
            c.lr.schedule = ScheduleKind::Constant;
            c.sync.h = 1;
            Preset {
                name: "rate-sweep",
                description: "lap_sgd on the 2-layer mlp, J in {250, 500, 1000, 2000}, alpha = c / sqrt(J)",
                algos: vec![Algo::LapSgd],
                async_updaters: 4,
                config: c,
                kind: PresetKind::RateSweep {
                    budgets: vec![250, 500, 1000, 2000],
                    c: 2.0,
                },
                targets: Targets::default(),
            }
        }
        "consistency-sweep" => {
            let mut c = quadratic_base()?;
            c.run.budget = 2000;
            c.run.tst = Some(200);
            c.run.eval_interval = Some(0);
            c.sync.switch_point = Some(1000);
            c.sync.warm_period = Some(1000);
            c.run.seeds = Some((0..5).collect());
            c.run.repetitions = 5;
            c.run.log = LogLevel::Full;
            c.run.provenance_sample = 64;
            c.run.interleave = true;
            c.lr.schedule = ScheduleKind::Constant;
            Preset {
                name: "consistency-sweep",
                description: "lap_sgd on the quadratic with constant alpha in {0.01, 0.02, 0.04}",
                algos: vec![Algo::LapSgd],
                async_updaters: 4,
                config: c,
                kind: PresetKind::ConsistencySweep {
                    alphas: vec![0.01, 0.02, 0.04],
                },
                targets: Targets::default(),
            }
        }
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (known: {})", PRESET_NAMES.join(", ")),
            ))
        }
    };
    Ok(p)
}
