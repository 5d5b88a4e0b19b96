//! Experiment configuration files.
//!
//! TOML; only `run.algo` and `objective.kind` are required. Unknown keys
//! are rejected.
//!
//! ```toml
//! [run]
//! algo = "lpp_sgd"        # mb_sgd | pl_sgd | lap_sgd | lpp_sgd
//! workers = 2             # Q
//! updaters = 4            # U (baselines: 1)
//! batch = 16              # local minibatch size
//! budget = 20000          # T, minibatches per worker
//! tst = 2000              # warm start T_st (default T/10)
//! seeds = [0, 1, 2]
//!
//! [lr]
//! schedule = "cosine"     # constant | cosine | multistep
//! alpha0 = 0.05
//! batch_base = 16         # optional: peak = alpha0 * Q * batch / batch_base
//! warmup = 500
//!
//! [sync]
//! h = 16                  # K after the jump point (K = 1 before)
//!
//! [objective]
//! kind = "mlp"            # quadratic | logistic_regression | mlp
//! hidden = [16]
//!
//! [data]
//! generator = "gaussian-blobs"   # or linear-regression; or path = "x.csv"
//! samples = 512
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{Algo, BlockPolicy, LogLevel, RunConfig};
use crate::error::{Error, Result};
use crate::objectives::{Dataset, LossKind, Objective, SamplingMode, Synthetic};
use crate::schedules::{scaled_peak, Decay, LrSchedule, SyncScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    #[serde(default)]
    pub lr: LrSection,
    #[serde(default)]
    pub sync: SyncSection,
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algo: Algo,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Defaults to 1 for the baselines and 4 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updaters: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Warm start `T_st`; defaults to `budget / 10`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tst: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Number of seeds when `seeds` is absent (`0..repetitions`).
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Defaults to `budget / 20`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_interval: Option<u64>,
    #[serde(default)]
    pub sampling: SamplingMode,
    /// Defaults to `alternating` for lpp_sgd and `full` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_policy: Option<BlockPolicy>,
    #[serde(default)]
    pub log: LogLevel,
    #[serde(default = "default_provenance_sample")]
    pub provenance_sample: usize,
    #[serde(default)]
    pub interleave: bool,
    #[serde(default)]
    pub quiescent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_budget: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Cosine,
    Multistep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSection {
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    /// Rate reached after warm-up; defaults to `alpha0`, or to the scaled
    /// rule when `batch_base` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_base: Option<usize>,
    #[serde(default)]
    pub warmup: u64,
    #[serde(default)]
    pub milestones: Vec<u64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

impl Default for LrSection {
    fn default() -> Self {
        LrSection {
            schedule: default_schedule(),
            alpha0: default_alpha0(),
            peak: None,
            batch_base: None,
            warmup: 0,
            milestones: Vec::new(),
            gamma: default_gamma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSection {
    #[serde(default = "default_h")]
    pub h: u64,
    /// Defaults to `budget / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_point: Option<u64>,
    /// Defaults to `budget / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_period: Option<u64>,
}

impl Default for SyncSection {
    fn default() -> Self {
        SyncSection {
            h: default_h(),
            switch_point: None,
            warm_period: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub kind: LossKind,
    /// Hidden layer widths (mlp only).
    #[serde(default)]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    GaussianBlobs,
    LinearRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// CSV file of `feature...,label` rows; overrides the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Defaults to linear-regression for the quadratic objective and
    /// gaussian-blobs otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            generator: None,
            samples: default_samples(),
            dim: default_dim(),
            classes: default_classes(),
            separation: default_separation(),
            spread: default_spread(),
            noise: default_noise(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out() }
    }
}

fn default_workers() -> usize {
    2
}
fn default_batch() -> usize {
    16
}
fn default_budget() -> u64 {
    20_000
}
fn default_repetitions() -> usize {
    3
}
fn default_provenance_sample() -> usize {
    16
}
fn default_schedule() -> ScheduleKind {
    ScheduleKind::Cosine
}
fn default_alpha0() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.1
}
fn default_h() -> u64 {
    16
}
fn default_samples() -> usize {
    512
}
fn default_dim() -> usize {
    16
}
fn default_classes() -> usize {
    2
}
fn default_separation() -> f64 {
    3.0
}
fn default_spread() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.01
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides, one per flag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub algo: Option<Algo>,
    pub workers: Option<usize>,
    pub updaters: Option<usize>,
    pub batch: Option<usize>,
    pub budget: Option<u64>,
    pub lr: Option<f64>,
    pub sync_h: Option<u64>,
    pub tst: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sampling: Option<SamplingMode>,
}

impl ExperimentConfig {
    /// Minimal configuration for `algo` on `kind`, defaults applied.
    pub fn new(algo: Algo, kind: LossKind) -> Result<Self> {
        let cfg = ExperimentConfig {
            run: RunSection {
                algo,
                workers: default_workers(),
                updaters: None,
                batch: default_batch(),
                budget: default_budget(),
                tst: None,
                seeds: None,
                repetitions: default_repetitions(),
                eval_interval: None,
                sampling: SamplingMode::default(),
                block_policy: None,
                log: LogLevel::default(),
                provenance_sample: default_provenance_sample(),
                interleave: false,
                quiescent: false,
                round_budget: None,
            },
            lr: LrSection::default(),
            sync: SyncSection::default(),
            objective: ObjectiveSection {
                kind,
                hidden: Vec::new(),
            },
            data: DataSection::default(),
            output: OutputSection::default(),
        };
        cfg.resolved()
    }

    /// Parses and validates a configuration document, filling defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.resolved()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Applies command-line flags, then re-derives dependent defaults that
    /// were not set explicitly and re-validates.
    pub fn with_overrides(&self, o: &Overrides) -> Result<Self> {
        let mut c = self.clone();
        if let Some(a) = o.algo {
            if a.is_baseline() != c.run.algo.is_baseline() && o.updaters.is_none() {
                c.run.updaters = None;
            }
            if a != c.run.algo && c.run.block_policy.is_some() {
                c.run.block_policy = None;
            }
            c.run.algo = a;
        }
        if let Some(budget) = o.budget {
            let old = c.run.budget;
            let derived = |v: Option<u64>, div: u64| v.filter(|&x| x != old / div);
            c.run.tst = derived(c.run.tst, 10);
            c.run.eval_interval = derived(c.run.eval_interval, 20);
            c.sync.switch_point = derived(c.sync.switch_point, 2);
            c.sync.warm_period = derived(c.sync.warm_period, 2);
            c.run.budget = budget;
        }
        set(&mut c.run.workers, o.workers);
        if o.updaters.is_some() {
            c.run.updaters = o.updaters;
        }
        set(&mut c.run.batch, o.batch);
        if let Some(lr) = o.lr {
            c.lr.alpha0 = lr;
            c.lr.peak = None;
            c.lr.batch_base = None;
        }
        set(&mut c.sync.h, o.sync_h);
        if o.tst.is_some() {
            c.run.tst = o.tst;
        }
        if let Some(seed) = o.seed {
            c.run.seeds = Some(vec![seed]);
            c.run.repetitions = 1;
        }
        if let Some(out) = &o.out {
            c.output.dir = out.clone();
        }
        set(&mut c.run.sampling, o.sampling);
        c.resolved()
    }

    fn resolved(mut self) -> Result<Self> {
        let r = &mut self.run;
        r.updaters.get_or_insert(if r.algo.is_baseline() { 1 } else { 4 });
        r.tst.get_or_insert(r.budget / 10);
        r.eval_interval.get_or_insert(r.budget / 20);
        r.block_policy.get_or_insert(match r.algo {
            Algo::LppSgd => BlockPolicy::Alternating,
            _ => BlockPolicy::Full,
        });
        match &r.seeds {
            Some(s) if s.len() != r.repetitions => {
                return Err(Error::config(
                    "repetitions",
                    format!("{} seeds listed but repetitions = {}", s.len(), r.repetitions),
                ))
            }
            Some(_) => {}
            None => r.seeds = Some((0..r.repetitions as u64).collect()),
        }
        self.sync.switch_point.get_or_insert(self.run.budget / 2);
        self.sync.warm_period.get_or_insert(self.run.budget / 2);
        if self.lr.batch_base.is_some() && self.lr.peak.is_some() {
            return Err(Error::config("peak", "set either peak or batch_base, not both"));
        }
        if self.data.generator.is_none() && self.data.path.is_none() {
            self.data.generator = Some(match self.objective.kind {
                LossKind::Quadratic => Generator::LinearRegression,
                _ => Generator::GaussianBlobs,
            });
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        if self.objective.kind != LossKind::Mlp && !self.objective.hidden.is_empty() {
            return Err(Error::config("hidden", "only the mlp objective has hidden layers"));
        }
        if self.objective.hidden.contains(&0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        if self.data.path.is_none() {
            self.synthetic()?;
        }
        // Run-level constraints (algo vs updaters, batch, budget, T_st,
        // schedules) are checked on the engine configuration.
        self.run_config(0)?.validate_settings()
    }

    pub fn seeds(&self) -> &[u64] {
        self.run.seeds.as_deref().unwrap_or(&[])
    }

    pub fn updaters(&self) -> usize {
        self.run.updaters.unwrap_or(1)
    }

    pub fn warm_start(&self) -> u64 {
        self.run.tst.unwrap_or(self.run.budget / 10)
    }

    /// Peak rate after warm-up.
    pub fn peak_lr(&self) -> f64 {
        match (self.lr.peak, self.lr.batch_base) {
            (Some(p), _) => p,
            (None, Some(base)) => scaled_peak(self.lr.alpha0, self.run.batch, self.run.workers, base),
            (None, None) => self.lr.alpha0,
        }
    }

    pub fn lr_schedule(&self) -> Result<LrSchedule> {
        let decay = match self.lr.schedule {
            ScheduleKind::Cosine => Decay::Cosine,
            ScheduleKind::Multistep | ScheduleKind::Constant => Decay::MultiStep {
                milestones: if self.lr.schedule == ScheduleKind::Constant {
                    Vec::new()
                } else {
                    self.lr.milestones.clone()
                },
                gamma: self.lr.gamma,
            },
        };
        LrSchedule::new(decay, self.lr.alpha0, self.peak_lr(), self.lr.warmup, self.run.budget)
    }

    pub fn sync_scheme(&self) -> Result<SyncScheme> {
        let half = self.run.budget / 2;
        SyncScheme::with_points(
            self.run.budget,
            self.sync.h,
            self.sync.switch_point.unwrap_or(half),
            self.sync.warm_period.unwrap_or(half),
        )
    }

    /// Engine configuration for one seed.
    pub fn run_config(&self, seed: u64) -> Result<RunConfig> {
        let r = &self.run;
        let mut cfg = RunConfig::new(r.algo, r.workers, self.updaters(), r.batch, r.budget, self.lr.alpha0)?;
        cfg.lr = self.lr_schedule()?;
        cfg.sync = self.sync_scheme()?;
        cfg.warm_start = self.warm_start();
        cfg.seed = seed;
        cfg.eval_interval = r.eval_interval.unwrap_or(r.budget / 20);
        cfg.sampling = r.sampling;
        if let Some(p) = r.block_policy {
            cfg.block_policy = p;
        }
        cfg.log = r.log;
        cfg.provenance_sample = if r.algo.is_baseline() { 0 } else { r.provenance_sample };
        cfg.interleave = r.interleave;
        cfg.quiescent = r.quiescent;
        cfg.round_budget = r.round_budget;
        Ok(cfg)
    }

    pub fn synthetic(&self) -> Result<Synthetic> {
        let d = &self.data;
        if d.samples == 0 {
            return Err(Error::config("samples", "must be at least 1"));
        }
        if d.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        match d.generator.unwrap_or(Generator::GaussianBlobs) {
            Generator::GaussianBlobs => {
                if d.classes < 2 {
                    return Err(Error::config("classes", "need at least 2 classes"));
                }
                if self.objective.kind == LossKind::LogisticRegression && d.classes != 2 {
                    return Err(Error::config("classes", "logistic regression needs 2 classes"));
                }
                Ok(Synthetic::GaussianBlobs {
                    classes: d.classes,
                    samples: d.samples,
                    dim: d.dim,
                    separation: d.separation,
                    spread: d.spread,
                })
            }
            Generator::LinearRegression => Ok(Synthetic::LinearTargets {
                samples: d.samples,
                dim: d.dim,
                noise: d.noise,
            }),
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        match &self.data.path {
            Some(p) => Dataset::load_csv(p),
            None => self.synthetic()?.generate(self.data.seed),
        }
    }

    pub fn objective(&self, data: Dataset) -> Result<Objective> {
        match self.objective.kind {
            LossKind::Quadratic => Ok(Objective::quadratic(data)),
            LossKind::LogisticRegression => Objective::logistic(data),
            LossKind::Mlp => Objective::mlp(data, &self.objective.hidden),
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
