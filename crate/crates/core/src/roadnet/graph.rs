use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{HiddenState, NetworkError, RoadNetwork, SegmentId, SemanticLandmark, StateId};

#[derive(Debug, Clone, Copy)]
enum Pred {
    Unreached,
    /// Reached directly from the source state, leaving its segment through
    /// the start (`at_end == false`) or end node.
    Source {
        at_end: bool,
    },
    Via {
        seg: usize,
        from: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Item {
    dist: f64,
    node: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A traversal between two states.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelPath {
    pub length_m: f64,
    /// Segments in travel order with their direction (`true` = along the
    /// polyline). Starts with the source segment and ends with the target
    /// segment; a single entry when both share a segment.
    pub segments: Vec<(SegmentId, bool)>,
}

enum Leg {
    Same,
    Across {
        exit_at_end: bool,
        middle: Vec<(usize, bool)>,
        enter_at_start: bool,
    },
}

/// Shortest travel distances from one state to every graph node, bounded
/// by a travel budget.
pub struct Reach<'a> {
    net: &'a RoadNetwork,
    source: HiddenState,
    source_seg: usize,
    budget: f64,
    dist: Vec<f64>,
    pred: Vec<Pred>,
}

impl RoadNetwork {
    /// Runs a bounded Dijkstra search from `from` over segment endpoints.
    pub fn reach_from(&self, from: StateId, budget_m: f64) -> Result<Reach<'_>, NetworkError> {
        let source = *self.checked_state(from)?;
        let source_seg = self.state_segment[from.index()];
        let n = self.incident.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![Pred::Unreached; n];
        let mut heap = BinaryHeap::new();
        let len = self.segments[source_seg].length_m();
        let [a, b] = self.endpoints[source_seg];
        for (node, d, at_end) in [(a, source.offset_m, false), (b, len - source.offset_m, true)] {
            if d <= budget_m && d < dist[node] {
                dist[node] = d;
                pred[node] = Pred::Source { at_end };
                heap.push(Item { dist: d, node });
            }
        }
        while let Some(Item { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &s in &self.incident[u] {
                let [sa, sb] = self.endpoints[s];
                let v = if sa == u { sb } else { sa };
                if v == u {
                    continue;
                }
                let nd = d + self.segments[s].length_m();
                if nd <= budget_m && nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Pred::Via { seg: s, from: u };
                    heap.push(Item { dist: nd, node: v });
                }
            }
        }
        Ok(Reach {
            net: self,
            source,
            source_seg,
            budget: budget_m,
            dist,
            pred,
        })
    }
}

impl<'a> Reach<'a> {
    pub fn source(&self) -> &HiddenState {
        &self.source
    }

    pub fn budget_m(&self) -> f64 {
        self.budget
    }

    /// (travel distance, entering through the segment start).
    fn entry(&self, target: &HiddenState) -> Option<(f64, bool)> {
        let si = *self.net.by_id.get(&target.segment_id)?;
        let [a, b] = self.net.endpoints[si];
        let len = self.net.segments[si].length_m();
        let via_start = self.dist[a] + target.offset_m;
        let via_end = self.dist[b] + (len - target.offset_m);
        let (d, at_start) = if via_start <= via_end {
            (via_start, true)
        } else {
            (via_end, false)
        };
        (d.is_finite() && d <= self.budget).then_some((d, at_start))
    }

    /// Travel distance to `target`, or `None` when it is beyond the budget.
    pub fn distance_to(&self, target: &HiddenState) -> Option<f64> {
        if target.segment_id == self.source.segment_id {
            return Some((target.offset_m - self.source.offset_m).abs());
        }
        self.entry(target).map(|(d, _)| d)
    }

    fn leg(&self, target: &HiddenState) -> Option<(f64, Leg)> {
        if target.segment_id == self.source.segment_id {
            return Some(((target.offset_m - self.source.offset_m).abs(), Leg::Same));
        }
        let (d, enter_at_start) = self.entry(target)?;
        let ti = self.net.by_id[&target.segment_id];
        let mut node = self.net.endpoints[ti][if enter_at_start { 0 } else { 1 }];
        let mut middle = Vec::new();
        loop {
            match self.pred[node] {
                Pred::Via { seg, from } => {
                    middle.push((seg, self.net.endpoints[seg][0] == from));
                    node = from;
                }
                Pred::Source { at_end } => {
                    middle.reverse();
                    return Some((
                        d,
                        Leg::Across {
                            exit_at_end: at_end,
                            middle,
                            enter_at_start,
                        },
                    ));
                }
                Pred::Unreached => return None,
            }
        }
    }

    pub fn path_to(&self, target: &HiddenState) -> Option<TravelPath> {
        let (length_m, leg) = self.leg(target)?;
        let segments = match leg {
            Leg::Same => vec![(target.segment_id, target.offset_m >= self.source.offset_m)],
            Leg::Across {
                exit_at_end,
                middle,
                enter_at_start,
            } => {
                let mut v = Vec::with_capacity(middle.len() + 2);
                v.push((self.net.segments[self.source_seg].id(), exit_at_end));
                v.extend(middle.iter().map(|&(s, fwd)| (self.net.segments[s].id(), fwd)));
                v.push((target.segment_id, enter_at_start));
                v
            }
        };
        Some(TravelPath { length_m, segments })
    }

    /// Visits the landmarks strictly between the source and `target` in
    /// travel order. Returns `false` when the target is out of reach.
    pub fn for_each_skipped<F: FnMut(&SemanticLandmark)>(&self, target: &HiddenState, mut f: F) -> bool {
        let Some((_, leg)) = self.leg(target) else {
            return false;
        };
        let o = self.source.offset_m;
        match leg {
            Leg::Same => {
                let lms = self.net.segments[self.source_seg].landmarks();
                let (lo, hi) = if target.offset_m >= o {
                    (o, target.offset_m)
                } else {
                    (target.offset_m, o)
                };
                let inner = between(lms, lo, hi);
                visit(inner, target.offset_m >= o, &mut f);
            }
            Leg::Across {
                exit_at_end,
                middle,
                enter_at_start,
            } => {
                let lms = self.net.segments[self.source_seg].landmarks();
                if exit_at_end {
                    visit(above(lms, o), true, &mut f);
                } else {
                    visit(below(lms, o), false, &mut f);
                }
                for (s, fwd) in middle {
                    visit(self.net.segments[s].landmarks(), fwd, &mut f);
                }
                let ti = self.net.by_id[&target.segment_id];
                let lms = self.net.segments[ti].landmarks();
                if enter_at_start {
                    visit(below(lms, target.offset_m), true, &mut f);
                } else {
                    visit(above(lms, target.offset_m), false, &mut f);
                }
            }
        }
        true
    }

    pub fn skipped(&self, target: &HiddenState) -> Option<Vec<SemanticLandmark>> {
        let mut out = Vec::new();
        self.for_each_skipped(target, |l| out.push(*l)).then_some(out)
    }
}

fn visit<F: FnMut(&SemanticLandmark)>(lms: &[SemanticLandmark], forward: bool, f: &mut F) {
    if forward {
        lms.iter().for_each(f);
    } else {
        lms.iter().rev().for_each(f);
    }
}

fn above(lms: &[SemanticLandmark], offset: f64) -> &[SemanticLandmark] {
    &lms[lms.partition_point(|l| l.offset_m <= offset)..]
}

fn below(lms: &[SemanticLandmark], offset: f64) -> &[SemanticLandmark] {
    &lms[..lms.partition_point(|l| l.offset_m < offset)]
}

fn between(lms: &[SemanticLandmark], lo: f64, hi: f64) -> &[SemanticLandmark] {
    let a = lms.partition_point(|l| l.offset_m <= lo);
    let b = lms.partition_point(|l| l.offset_m < hi);
    &lms[a..b.max(a)]
}
