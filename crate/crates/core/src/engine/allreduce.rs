//! In-memory all-reduce rendezvous for the averaging threads.

use std::sync::{Arc, Condvar, Mutex};

/// Result of one completed round.
#[derive(Debug, Clone)]
pub struct Reduced {
    /// 1-based round number.
    pub round: u64,
    pub mean: Arc<Vec<f64>>,
    /// Every participant reported that its updaters had finished.
    pub all_finished: bool,
}

#[derive(Debug)]
struct State {
    round: u64,
    arrived: usize,
    contributions: Vec<Option<Vec<f64>>>,
    finished: Vec<bool>,
    last: Option<Reduced>,
    aborted: bool,
}

/// Generation barrier that averages one vector per participant. Participant
/// `q` may contribute at most once per round; the mean is summed in
/// participant order so every round is reproducible given its inputs.
#[derive(Debug)]
pub struct AllReduce {
    parties: usize,
    state: Mutex<State>,
    cv: Condvar,
}

impl AllReduce {
    pub fn new(parties: usize) -> Self {
        assert!(parties > 0);
        AllReduce {
            parties,
            state: Mutex::new(State {
                round: 0,
                arrived: 0,
                contributions: vec![None; parties],
                finished: vec![false; parties],
                last: None,
                aborted: false,
            }),
            cv: Condvar::new(),
        }
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    /// Releases every waiting participant; all later calls return `None`.
    pub fn abort(&self) {
        self.state.lock().unwrap().aborted = true;
        self.cv.notify_all();
    }

    /// Blocks until every participant has contributed to the current round.
    /// Returns `None` once the rendezvous has been aborted.
    pub fn reduce(&self, participant: usize, values: Vec<f64>, finished: bool) -> Option<Reduced> {
        let mut state = self.state.lock().unwrap();
        if state.aborted {
            return None;
        }
        assert!(
            state.contributions[participant].is_none(),
            "participant {participant} contributed twice to one round"
        );
        state.contributions[participant] = Some(values);
        state.finished[participant] = finished;
        state.arrived += 1;
        let my_round = state.round;
        if state.arrived == self.parties {
            let mut sum: Vec<f64> = Vec::new();
            for c in state.contributions.iter_mut() {
                let v = c.take().expect("all participants arrived");
                if sum.is_empty() {
                    sum = v;
                } else {
                    sum.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
                }
            }
            let q = self.parties as f64;
            sum.iter_mut().for_each(|v| *v /= q);
            let all_finished = state.finished.iter().all(|&f| f);
            state.round += 1;
            state.arrived = 0;
            let reduced = Reduced {
                round: state.round,
                mean: Arc::new(sum),
                all_finished,
            };
            state.last = Some(reduced.clone());
            self.cv.notify_all();
            return Some(reduced);
        }
        while state.round == my_round && !state.aborted {
            state = self.cv.wait(state).unwrap();
        }
        if state.round == my_round {
            return None;
        }
        state.last.clone()
    }
}
