//! Route-level scoring of a matched trajectory against ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roadnet::{NetworkError, RoadNetwork, SegmentId, StateId};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("segment {0} has a non-positive or non-finite length")]
    BadLength(SegmentId),
    #[error("truth path is empty")]
    EmptyTruth,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub segment_id: SegmentId,
    pub length_m: f64,
}

/// Ordered traversed segments with their traversed lengths. Consecutive
/// repeats of a segment are merged, keeping the longer length.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PathEntry>", into = "Vec<PathEntry>")]
pub struct SegmentPath {
    entries: Vec<PathEntry>,
}

impl TryFrom<Vec<PathEntry>> for SegmentPath {
    type Error = EvalError;

    fn try_from(v: Vec<PathEntry>) -> Result<Self, EvalError> {
        SegmentPath::new(v.into_iter().map(|e| (e.segment_id, e.length_m)))
    }
}

impl From<SegmentPath> for Vec<PathEntry> {
    fn from(p: SegmentPath) -> Self {
        p.entries
    }
}

impl SegmentPath {
    pub fn new<I>(entries: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (SegmentId, f64)>,
    {
        let mut out: Vec<PathEntry> = Vec::new();
        for (segment_id, length_m) in entries {
            if !(length_m > 0.0 && length_m.is_finite()) {
                return Err(EvalError::BadLength(segment_id));
            }
            match out.last_mut() {
                Some(last) if last.segment_id == segment_id => {
                    last.length_m = last.length_m.max(length_m);
                }
                _ => out.push(PathEntry { segment_id, length_m }),
            }
        }
        Ok(SegmentPath { entries: out })
    }

    pub fn entries(&self) -> &[PathEntry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<SegmentId> {
        self.entries.iter().map(|e| e.segment_id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_length_m(&self) -> f64 {
        self.entries.iter().map(|e| e.length_m).sum()
    }
}

/// Segment path of a decoded state sequence. Gaps between consecutive
/// states on different segments are filled with the shortest connecting
/// segments; states with no connecting path are simply concatenated.
/// Every segment counts with its full length.
pub fn path_from_states(network: &RoadNetwork, states: &[StateId]) -> Result<SegmentPath, EvalError> {
    let mut ids: Vec<SegmentId> = Vec::new();
    let mut prev: Option<StateId> = None;
    for &s in states {
        let seg = network.state(s).ok_or(NetworkError::UnknownState(s))?.segment_id;
        match prev {
            Some(p) if p != s => match network.segment_path(p, s) {
                Ok(path) => ids.extend(path.into_iter().skip(1)),
                Err(NetworkError::Unreachable(..)) => ids.push(seg),
                Err(e) => return Err(e.into()),
            },
            Some(_) => {}
            None => ids.push(seg),
        }
        prev = Some(s);
    }
    SegmentPath::new(ids.into_iter().map(|id| {
        let len = network.segment(id).map_or(0.0, |s| s.length_m());
        (id, len)
    }))
}

/// Length-weighted longest common subsequence of two paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonSequence {
    /// Summed length of the matched pairs, each counted as the shorter of
    /// its two traversed lengths.
    pub matched_m: f64,
    pub ids: Vec<SegmentId>,
}

pub fn common_sequence(output: &SegmentPath, truth: &SegmentPath) -> CommonSequence {
    let (a, b) = (&output.entries, &truth.entries);
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut dp = vec![0.0f64; (n + 1) * w];
    for i in 1..=n {
        for j in 1..=m {
            let mut best = dp[(i - 1) * w + j].max(dp[i * w + j - 1]);
            if a[i - 1].segment_id == b[j - 1].segment_id {
                best = best.max(dp[(i - 1) * w + j - 1] + a[i - 1].length_m.min(b[j - 1].length_m));
            }
            dp[i * w + j] = best;
        }
    }
    let mut ids = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let here = dp[i * w + j];
        if a[i - 1].segment_id == b[j - 1].segment_id
            && here == dp[(i - 1) * w + j - 1] + a[i - 1].length_m.min(b[j - 1].length_m)
        {
            ids.push(a[i - 1].segment_id);
            i -= 1;
            j -= 1;
        } else if here == dp[(i - 1) * w + j] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    ids.reverse();
    CommonSequence {
        matched_m: dp[n * w + m],
        ids,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Matched distance.
    pub x_m: f64,
    /// Output distance not matched.
    pub y_m: f64,
    /// Truth distance.
    pub g_m: f64,
    /// The output path was empty; precision is reported as 0.
    pub precision_undefined: bool,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn score(output: &SegmentPath, truth: &SegmentPath) -> Result<Score, EvalError> {
    let g = truth.total_length_m();
    if !(g > 0.0) {
        return Err(EvalError::EmptyTruth);
    }
    let total = output.total_length_m();
    let x = common_sequence(output, truth).matched_m;
    let precision_undefined = output.is_empty();
    let precision = if precision_undefined { 0.0 } else { x / total };
    let recall = x / g;
    Ok(Score {
        precision,
        recall,
        f_measure: f_measure(precision, recall),
        x_m: x,
        y_m: total - x,
        g_m: g,
        precision_undefined,
    })
}
