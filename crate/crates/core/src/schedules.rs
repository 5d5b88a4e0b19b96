//! Learning-rate schedules and the synchronization-frequency scheme.
//!
//! All positions are measured in minibatches on the shared counter, so every
//! updater of a worker sees the same rate for the same counter value.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Decay {
    /// Cosine annealing to zero over the post-warm-up span, no restarts.
    Cosine,
    /// Multiply by `gamma` at each milestone.
    MultiStep { milestones: Vec<u64>, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub decay: Decay,
    pub alpha0: f64,
    pub peak: f64,
    pub warmup: u64,
    pub total: u64,
}

impl LrSchedule {
    pub fn new(decay: Decay, alpha0: f64, peak: f64, warmup: u64, total: u64) -> Result<Self> {
        if !(alpha0 >= 0.0 && alpha0.is_finite()) {
            return Err(Error::config("lr", format!("must be a non-negative number, got {alpha0}")));
        }
        if !(peak >= alpha0 && peak.is_finite()) {
            return Err(Error::config(
                "peak_lr",
                format!("must be at least the base rate {alpha0}, got {peak}"),
            ));
        }
        if warmup > total {
            return Err(Error::config(
                "warmup",
                format!("{warmup} exceeds the budget {total}"),
            ));
        }
        if let Decay::MultiStep { milestones, gamma } = &decay {
            if !(*gamma > 0.0 && *gamma <= 1.0) {
                return Err(Error::config("gamma", format!("must be in (0, 1], got {gamma}")));
            }
            if milestones.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("milestones", "must be strictly increasing"));
            }
        }
        Ok(LrSchedule {
            decay,
            alpha0,
            peak,
            warmup,
            total,
        })
    }

    /// Constant rate: no warm-up, no decay.
    pub fn constant(alpha: f64, total: u64) -> Result<Self> {
        Self::new(
            Decay::MultiStep {
                milestones: Vec::new(),
                gamma: 1.0,
            },
            alpha,
            alpha,
            0,
            total,
        )
    }

    pub fn cosine(alpha0: f64, peak: f64, warmup: u64, total: u64) -> Result<Self> {
        Self::new(Decay::Cosine, alpha0, peak, warmup, total)
    }

    pub fn multistep(
        alpha0: f64,
        peak: f64,
        warmup: u64,
        total: u64,
        milestones: Vec<u64>,
        gamma: f64,
    ) -> Result<Self> {
        Self::new(Decay::MultiStep { milestones, gamma }, alpha0, peak, warmup, total)
    }

    /// Same shape with the peak scaled by `factor` (e.g. the 1.25x partial
    /// gradient boost).
    pub fn with_peak_factor(&self, factor: f64) -> Self {
        LrSchedule {
            peak: self.peak * factor,
            ..self.clone()
        }
    }

    /// Rate at counter value `s`; values past the budget get the terminal rate.
    pub fn lr_at(&self, s: u64) -> f64 {
        if s < self.warmup {
            let frac = s as f64 / self.warmup as f64;
            return self.alpha0 + (self.peak - self.alpha0) * frac;
        }
        match &self.decay {
            Decay::Cosine => {
                let span = self.total.saturating_sub(self.warmup);
                if span == 0 || s >= self.total {
                    return 0.0;
                }
                let frac = (s - self.warmup) as f64 / span as f64;
                self.peak * 0.5 * (1.0 + (PI * frac).cos())
            }
            Decay::MultiStep { milestones, gamma } => {
                let passed = milestones.iter().filter(|&&m| m <= s).count();
                self.peak * gamma.powi(passed as i32)
            }
        }
    }
}

/// Warmed-up rate under linear scaling: `alpha0 * (b_loc * workers) / b_base`.
pub fn scaled_peak(alpha0: f64, b_loc: usize, workers: usize, b_base: usize) -> f64 {
    alpha0 * (b_loc * workers) as f64 / b_base as f64
}

/// `K = 1` until the counter reaches the switch point, `H` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncScheme {
    pub total: u64,
    pub h: u64,
    pub switch_point: u64,
    /// Counter value before which `K` is necessarily 1, independently of
    /// `switch_point`; the effective jump is at the later of the two.
    pub warm_period: u64,
}

impl SyncScheme {
    /// Defaults both the switch point and the warm period to `total / 2`.
    pub fn new(total: u64, h: u64) -> Result<Self> {
        Self::with_points(total, h, total / 2, total / 2)
    }

    pub fn with_points(total: u64, h: u64, switch_point: u64, warm_period: u64) -> Result<Self> {
        if h == 0 {
            return Err(Error::config("sync_h", "must be at least 1"));
        }
        if switch_point > total {
            return Err(Error::config(
                "sync_switch",
                format!("{switch_point} exceeds the budget {total}"),
            ));
        }
        Ok(SyncScheme {
            total,
            h,
            switch_point,
            warm_period,
        })
    }

    /// Every round has `K = k`.
    pub fn constant(total: u64, k: u64) -> Result<Self> {
        Self::with_points(total, k, 0, 0)
    }

    pub fn jump_point(&self) -> u64 {
        self.switch_point.max(self.warm_period)
    }

    pub fn sync_k(&self, s_cur: u64) -> u64 {
        if s_cur < self.jump_point() {
            1
        } else {
            self.h
        }
    }
}
