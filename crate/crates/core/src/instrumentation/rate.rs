use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::stats::{loglog_slope, mean_std, standard_error};

/// Passing threshold on the log-log slope.
pub const RATE_SLOPE_THRESHOLD: f64 = -0.4;

/// `min_j ||grad f(x_j)||^2` over a sequence of averaged iterates.
pub fn ergodic_statistic(obj: &Objective, iterates: &[Vec<f64>]) -> Result<f64> {
    if iterates.is_empty() {
        return Err(Error::Run("no averaged iterates to evaluate".into()));
    }
    let mut best = f64::INFINITY;
    for x in iterates {
        let g = obj.full_gradient(x)?;
        best = best.min(g.iter().map(|v| v * v).sum());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub rounds: u64,
    pub mean: f64,
    pub std: f64,
    pub se: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Ascending in round budget.
    pub points: Vec<RatePoint>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    /// The seed-mean statistic never increases with the budget.
    pub non_increasing: bool,
    /// Set when the check could not pass; the raw data stays in `points`.
    pub failure: Option<String>,
}

impl RateReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("J        seeds  mean           std          se\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:<8} {:<6} {:<14.6e} {:<12.4e} {:.4e}\n",
                p.rounds,
                p.per_seed.len(),
                p.mean,
                p.std,
                p.se
            ));
        }
        match self.slope {
            Some(slope) => s.push_str(&format!(
                "slope {slope:.4} (threshold {RATE_SLOPE_THRESHOLD}), r^2 {:.4}\n",
                self.r_squared.unwrap_or(f64::NAN)
            )),
            None => s.push_str("slope n/a\n"),
        }
        if let Some(f) = &self.failure {
            s.push_str(&format!("FAIL: {f}\n"));
        }
        s
    }
}

/// Fits the log-log slope of the seed-mean statistic against the round
/// budget `J`. `series` maps `J` to one statistic per seed.
pub fn ergodic_rate_check(series: &BTreeMap<u64, Vec<f64>>) -> Result<RateReport> {
    if series.len() < 4 {
        return Err(Error::config(
            "rate_budgets",
            format!("need at least 4 round budgets, got {}", series.len()),
        ));
    }
    if let Some((j, _)) = series.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::config("rate_budgets", format!("no seeds recorded for J = {j}")));
    }
    let points: Vec<RatePoint> = series
        .iter()
        .map(|(&rounds, v)| {
            let (mean, std) = mean_std(v);
            RatePoint {
                rounds,
                mean,
                std,
                se: if v.len() > 1 { standard_error(v) } else { 0.0 },
                per_seed: v.clone(),
            }
        })
        .collect();
    let non_increasing = points.windows(2).all(|w| w[1].mean <= w[0].mean);
    let fit = loglog_slope(
        &points.iter().map(|p| p.rounds as f64).collect::<Vec<_>>(),
        &points.iter().map(|p| p.mean).collect::<Vec<_>>(),
    );
    let failure = if points.last().unwrap().mean >= points[0].mean {
        Some("statistic does not decrease with the round budget".to_string())
    } else {
        match fit {
            None => Some("log-log fit undefined (non-positive statistic)".to_string()),
            Some(f) if f.slope > RATE_SLOPE_THRESHOLD => Some(format!(
                "slope {:.4} above threshold {RATE_SLOPE_THRESHOLD}",
                f.slope
            )),
            Some(_) => None,
        }
    };
    Ok(RateReport {
        points,
        slope: fit.map(|f| f.slope),
        intercept: fit.map(|f| f.intercept),
        r_squared: fit.map(|f| f.r_squared),
        non_increasing,
        failure,
    })
}
