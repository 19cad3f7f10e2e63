//! Online Viterbi decoding over a sliding window of trellis steps.

use std::collections::VecDeque;

use super::probability::{update_priors, TransitionMatrix};
use crate::roadnet::StateId;

const NONE: usize = usize::MAX;

/// A decoded trellis position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub state: StateId,
    /// Best cumulative log score of the state when it was decoded.
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Step {
    ids: Vec<StateId>,
    obs: Vec<f64>,
    /// Transitions from the previous step; unused for the window's first step.
    trans: Option<TransitionMatrix>,
    /// Log priors; used while the step is the window's first.
    prior: Vec<f64>,
    scores: Vec<f64>,
    back: Vec<usize>,
}

/// Returned by [`TrellisWindow::extend`] when no state of the new step can
/// be reached with finite score. The window is left unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrokenChain;

/// Sliding-window Viterbi trellis.
///
/// Holds at most `capacity` steps. When a push overflows the window, the
/// oldest step's state on the current best path is committed, the priors
/// are carried forward onto the next step and the window is rescored.
/// Equal scores resolve to the lowest state id, both in back-pointers and
/// in the final argmax.
#[derive(Debug, Clone)]
pub struct TrellisWindow {
    capacity: usize,
    steps: VecDeque<Step>,
    committed: Vec<Decoded>,
    prior_fallbacks: usize,
}

fn check_ids(ids: &[StateId]) {
    assert!(!ids.is_empty(), "trellis step without candidates");
    assert!(
        ids.windows(2).all(|w| w[0] < w[1]),
        "trellis candidates must be strictly ascending"
    );
}

impl TrellisWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be positive");
        TrellisWindow {
            capacity,
            steps: VecDeque::new(),
            committed: Vec::new(),
            prior_fallbacks: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Steps currently held in the window.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of steps whose state is final.
    pub fn committed_len(&self) -> usize {
        self.committed.len()
    }

    pub fn committed(&self) -> &[Decoded] {
        &self.committed
    }

    /// Times the carried-forward priors had no mass and fell back to uniform.
    pub fn prior_fallbacks(&self) -> usize {
        self.prior_fallbacks
    }

    /// Starts a new chain. Any open chain is committed first.
    pub fn start(&mut self, ids: Vec<StateId>, prior: Vec<f64>, obs: Vec<f64>) {
        check_ids(&ids);
        assert_eq!(ids.len(), prior.len());
        assert_eq!(ids.len(), obs.len());
        self.flush();
        let scores = prior.iter().zip(&obs).map(|(p, o)| p + o).collect();
        let back = vec![NONE; ids.len()];
        self.steps.push_back(Step {
            ids,
            obs,
            trans: None,
            prior,
            scores,
            back,
        });
        self.slide_if_full();
    }

    /// Appends a step to the open chain. `trans` has one row per state of
    /// the previous step and one column per new state.
    pub fn extend(
        &mut self,
        ids: Vec<StateId>,
        obs: Vec<f64>,
        trans: TransitionMatrix,
    ) -> Result<(), BrokenChain> {
        check_ids(&ids);
        assert_eq!(ids.len(), obs.len());
        let last = self.steps.back().expect("extend needs an open chain");
        assert_eq!(trans.rows(), last.ids.len());
        assert_eq!(trans.cols(), ids.len());
        let (scores, back) = advance(&last.scores, &trans, &obs);
        if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(BrokenChain);
        }
        self.steps.push_back(Step {
            ids,
            obs,
            trans: Some(trans),
            prior: Vec::new(),
            scores,
            back,
        });
        self.slide_if_full();
        Ok(())
    }

    fn slide_if_full(&mut self) {
        while self.steps.len() > self.capacity {
            let path = self.best_path();
            let oldest = self.steps.pop_front().expect("window is non-empty");
            self.committed.push(Decoded {
                state: oldest.ids[path[0]],
                score: oldest.scores[path[0]],
            });
            if let Some(next) = self.steps.front_mut() {
                let trans = next.trans.take().expect("non-first step has transitions");
                let (prior, fallback) = update_priors(&oldest.prior, &trans);
                self.prior_fallbacks += usize::from(fallback);
                next.prior = prior;
                self.rescore();
            }
        }
    }

    fn rescore(&mut self) {
        let first = &mut self.steps[0];
        first.scores = first.prior.iter().zip(&first.obs).map(|(p, o)| p + o).collect();
        first.back = vec![NONE; first.ids.len()];
        for k in 1..self.steps.len() {
            let (scores, back) = {
                let prev = &self.steps[k - 1];
                let cur = &self.steps[k];
                advance(&prev.scores, cur.trans.as_ref().expect("transitions"), &cur.obs)
            };
            self.steps[k].scores = scores;
            self.steps[k].back = back;
        }
    }

    /// Candidate indices of the best path through the window, oldest first.
    fn best_path(&self) -> Vec<usize> {
        let Some(last) = self.steps.back() else {
            return Vec::new();
        };
        let mut path = vec![0; self.steps.len()];
        let mut cur = argmax(&last.scores);
        for k in (0..self.steps.len()).rev() {
            path[k] = cur;
            if k > 0 {
                let b = self.steps[k].back[cur];
                cur = if b == NONE {
                    argmax(&self.steps[k - 1].scores)
                } else {
                    b
                };
            }
        }
        path
    }

    /// Best current state and its score, or `None` for an empty window.
    pub fn head(&self) -> Option<Decoded> {
        let last = self.steps.back()?;
        let i = argmax(&last.scores);
        Some(Decoded {
            state: last.ids[i],
            score: last.scores[i],
        })
    }

    /// Committed states followed by the current best path through the
    /// window.
    pub fn decoded(&self) -> Vec<Decoded> {
        let mut out = self.committed.clone();
        out.extend(self.window_path());
        out
    }

    fn window_path(&self) -> impl Iterator<Item = Decoded> + '_ {
        self.best_path()
            .into_iter()
            .zip(&self.steps)
            .map(|(i, s)| Decoded {
                state: s.ids[i],
                score: s.scores[i],
            })
    }

    /// Commits the whole window along its best path and empties it.
    pub fn flush(&mut self) {
        let tail: Vec<Decoded> = self.window_path().collect();
        self.committed.extend(tail);
        self.steps.clear();
    }

    /// Flushes and returns every decoded state.
    pub fn finish(mut self) -> Vec<Decoded> {
        self.flush();
        self.committed
    }
}

/// One Viterbi recursion: best predecessor per state (lowest index on
/// ties; candidate order is ascending state id) plus the emission.
fn advance(prev: &[f64], trans: &TransitionMatrix, obs: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut scores = Vec::with_capacity(obs.len());
    let mut back = Vec::with_capacity(obs.len());
    for (j, o) in obs.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut arg = NONE;
        for (i, p) in prev.iter().enumerate() {
            let v = p + trans.get(i, j);
            if v > best {
                best = v;
                arg = i;
            }
        }
        scores.push(best + o);
        back.push(arg);
    }
    (scores, back)
}

fn argmax(v: &[f64]) -> usize {
    let mut arg = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[arg] {
            arg = i;
        }
    }
    arg
}
