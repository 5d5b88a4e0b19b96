use std::collections::BTreeMap;

use crate::engine::{AveragingRound, UpdateRecord};
use crate::error::{Error, Result};

/// What a worker's replayed view becomes after an averaging write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Add the logged delta, reproducing the store's actual trajectory.
    Logged,
    /// Reset every worker to the reconstructed mean. Only meaningful when
    /// updaters were paused during averaging (quiescent runs).
    Averaged,
}

/// Distance between the view just before a write and the snapshot the
/// writer differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewDistance {
    pub worker: usize,
    pub update_order: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinorViews {
    /// Reconstructed averaged iterates, index `j - 1` for round `j`.
    pub averaged: Vec<Vec<f64>>,
    /// `pre_average[j - 1][q]`: worker `q`'s last minor view of round `j`.
    pub pre_average: Vec<Vec<Vec<f64>>>,
    /// Each worker's view after its last write.
    pub final_views: Vec<Vec<f64>>,
    /// One entry per update that logged its snapshot.
    pub distances: Vec<ViewDistance>,
}

enum Write<'a> {
    Update(&'a UpdateRecord),
    Round(&'a AveragingRound),
}

impl Write<'_> {
    fn order(&self) -> u64 {
        match self {
            Write::Update(u) => u.update_order,
            Write::Round(r) => r.update_order,
        }
    }
}

/// Replays every worker's writes in update order from `initial`, using the
/// logged gradients. Requires a complete log (every update carries its
/// gradient; in [`ReplayMode::Logged`] every round carries its delta).
pub fn reconstruct_minor_views(
    initial: &[f64],
    workers: usize,
    updates: &[UpdateRecord],
    rounds: &[AveragingRound],
    mode: ReplayMode,
) -> Result<MinorViews> {
    let d = initial.len();
    let mut per_worker: Vec<Vec<Write>> = (0..workers).map(|_| Vec::new()).collect();
    for u in updates {
        let list = per_worker
            .get_mut(u.worker)
            .ok_or_else(|| Error::Reconstruction(format!("update from unknown worker {}", u.worker)))?;
        list.push(Write::Update(u));
    }
    let mut rounds_per_worker: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for r in rounds {
        let list = per_worker
            .get_mut(r.worker)
            .ok_or_else(|| Error::Reconstruction(format!("round from unknown worker {}", r.worker)))?;
        list.push(Write::Round(r));
        rounds_per_worker.entry(r.worker).or_default().push(r.round);
    }
    let mut num_rounds = None;
    for q in 0..workers {
        let mut ids = rounds_per_worker.remove(&q).unwrap_or_default();
        ids.sort_unstable();
        let j = ids.len();
        if ids.iter().enumerate().any(|(i, &r)| r != i as u64 + 1) {
            return Err(Error::Reconstruction(format!(
                "worker {q} logged rounds {ids:?}, expected 1..={j}"
            )));
        }
        if *num_rounds.get_or_insert(j) != j {
            return Err(Error::Reconstruction("workers logged different round counts".into()));
        }
    }
    for (q, list) in per_worker.iter_mut().enumerate() {
        list.sort_by_key(Write::order);
        for (i, w) in list.iter().enumerate() {
            if w.order() != i as u64 + 1 {
                return Err(Error::Reconstruction(format!(
                    "worker {q}: gap or duplicate at update order {} (expected {})",
                    w.order(),
                    i + 1
                )));
            }
        }
    }

    let mut views = vec![initial.to_vec(); workers];
    let mut cursor = vec![0usize; workers];
    let mut distances = Vec::new();
    let mut averaged = Vec::new();
    let mut pre_average = Vec::new();

    let mut advance = |q: usize, view: &mut Vec<f64>, cursor: &mut usize| -> Result<Option<&AveragingRound>> {
        while let Some(w) = per_worker[q].get(*cursor) {
            *cursor += 1;
            match w {
                Write::Round(r) => return Ok(Some(*r)),
                Write::Update(u) => {
                    let g = u.gradient.as_ref().ok_or_else(|| {
                        Error::Reconstruction(format!(
                            "update {} on worker {q} has no logged gradient",
                            u.update_order
                        ))
                    })?;
                    if g.len() != u.block.len() || u.block.end > d {
                        return Err(Error::Reconstruction(format!(
                            "update {} on worker {q}: gradient does not fit its block",
                            u.update_order
                        )));
                    }
                    if let Some(v) = &u.snapshot {
                        let dist = v
                            .iter()
                            .zip(view.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        distances.push(ViewDistance {
                            worker: q,
                            update_order: u.update_order,
                            distance: dist,
                        });
                    }
                    for (x, gi) in view[u.block.clone()].iter_mut().zip(g) {
                        *x -= u.lr * gi;
                    }
                }
            }
        }
        Ok(None)
    };

    for _ in 0..num_rounds.unwrap_or(0) {
        let mut deltas = Vec::with_capacity(workers);
        for q in 0..workers {
            let r = advance(q, &mut views[q], &mut cursor[q])?
                .expect("round count checked above");
            deltas.push(r.delta.as_ref());
        }
        let mut mean = views[0].clone();
        for v in &views[1..] {
            mean.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        let qf = workers as f64;
        mean.iter_mut().for_each(|v| *v /= qf);
        pre_average.push(views.clone());
        for (q, view) in views.iter_mut().enumerate() {
            match mode {
                ReplayMode::Averaged => view.copy_from_slice(&mean),
                ReplayMode::Logged => {
                    let delta = deltas[q].ok_or_else(|| {
                        Error::Reconstruction(format!("round on worker {q} has no logged delta"))
                    })?;
                    view.iter_mut().zip(delta).for_each(|(a, b)| *a += b);
                }
            }
        }
        averaged.push(mean);
    }
    for q in 0..workers {
        if advance(q, &mut views[q], &mut cursor[q])?.is_some() {
            unreachable!("all rounds consumed");
        }
    }
    Ok(MinorViews {
        averaged,
        pre_average,
        final_views: views,
        distances,
    })
}
