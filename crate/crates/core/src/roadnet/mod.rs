//! Semantically enriched road network: segments, landmarks, the hidden
//! state space built from them, a spatial index over state locations and
//! topological queries between states.

mod geojson;
mod graph;
mod index;
mod types;

use std::collections::HashMap;
use std::io::Read;
use std::ops::Range;

use thiserror::Error;

use crate::geo::{bearing, geodesic_distance, GeoError, GeoPoint};

pub use self::geojson::{read_geojson, write_geojson};
pub use self::graph::{Reach, TravelPath};
pub use self::types::{HiddenState, SegmentId, SemanticLandmark, SemanticType, StateId, UnknownSemanticType};

use self::index::StateIndex;

/// Maximum distance between a landmark and its segment polyline, meters.
pub const LANDMARK_TOLERANCE_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("malformed network file: {0}")]
    Parse(String),
    #[error("network has no segments")]
    Empty,
    #[error("duplicate segment id {0}")]
    DuplicateSegment(SegmentId),
    #[error("segment {0}: polyline needs at least two points")]
    ShortPolyline(SegmentId),
    #[error("segment {0}: polyline has zero length")]
    ZeroLength(SegmentId),
    #[error("segment {segment}: {kind} landmark lies {distance_m:.1} m off the polyline")]
    LandmarkOffSegment {
        segment: SegmentId,
        kind: SemanticType,
        distance_m: f64,
    },
    #[error("segment {0}: no_class cannot be a map landmark")]
    NoClassLandmark(SegmentId),
    #[error("segment {0}: two landmarks share the same position")]
    DuplicateLandmark(SegmentId),
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("no path between {0} and {1}")]
    Unreachable(StateId, StateId),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input description of one segment prior to validation.
#[derive(Debug, Clone)]
pub struct SegmentSpec {
    pub id: SegmentId,
    pub polyline: Vec<GeoPoint>,
    pub speed_limit_mps: Option<f64>,
    pub landmarks: Vec<(SemanticType, GeoPoint)>,
}

#[derive(Debug, Clone)]
pub struct RoadSegment {
    id: SegmentId,
    polyline: Vec<GeoPoint>,
    /// Cumulative arc length at each polyline vertex.
    cumulative: Vec<f64>,
    speed_limit_mps: Option<f64>,
    landmarks: Vec<SemanticLandmark>,
}

impl RoadSegment {
    pub fn new(spec: SegmentSpec) -> Result<Self, NetworkError> {
        let SegmentSpec {
            id,
            polyline,
            speed_limit_mps,
            landmarks,
        } = spec;
        if polyline.len() < 2 {
            return Err(NetworkError::ShortPolyline(id));
        }
        let mut cumulative = Vec::with_capacity(polyline.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in polyline.windows(2) {
            acc += geodesic_distance(&w[0], &w[1]);
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(NetworkError::ZeroLength(id));
        }
        let mut seg = RoadSegment {
            id,
            polyline,
            cumulative,
            speed_limit_mps,
            landmarks: Vec::with_capacity(landmarks.len()),
        };
        for (kind, loc) in landmarks {
            if !kind.is_landmark() {
                return Err(NetworkError::NoClassLandmark(id));
            }
            let (offset_m, distance_m) = seg.project(&loc);
            if distance_m > LANDMARK_TOLERANCE_M {
                return Err(NetworkError::LandmarkOffSegment {
                    segment: id,
                    kind,
                    distance_m,
                });
            }
            seg.landmarks.push(SemanticLandmark { kind, loc, offset_m });
        }
        seg.landmarks.sort_by(|a, b| a.offset_m.total_cmp(&b.offset_m));
        if seg.landmarks.windows(2).any(|w| w[0].offset_m == w[1].offset_m) {
            return Err(NetworkError::DuplicateLandmark(id));
        }
        Ok(seg)
    }

    #[inline]
    pub fn id(&self) -> SegmentId {
        self.id
    }

    pub fn polyline(&self) -> &[GeoPoint] {
        &self.polyline
    }

    pub fn speed_limit_mps(&self) -> Option<f64> {
        self.speed_limit_mps
    }

    /// Landmarks sorted by arc offset.
    pub fn landmarks(&self) -> &[SemanticLandmark] {
        &self.landmarks
    }

    #[inline]
    pub fn length_m(&self) -> f64 {
        *self.cumulative.last().expect("polyline has >= 2 points")
    }

    pub fn start(&self) -> GeoPoint {
        self.polyline[0]
    }

    pub fn end(&self) -> GeoPoint {
        *self.polyline.last().expect("polyline has >= 2 points")
    }

    /// Projects `p` onto the polyline, returning (arc offset, distance).
    pub fn project(&self, p: &GeoPoint) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for (i, w) in self.polyline.windows(2).enumerate() {
            let (bx, by) = w[0].local_xy(&w[1]);
            let (px, py) = w[0].local_xy(p);
            let len2 = bx * bx + by * by;
            let frac = if len2 > 0.0 {
                ((px * bx + py * by) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = w[0].lerp(&w[1], frac);
            let d = geodesic_distance(p, &q);
            if d < best.1 {
                let piece = self.cumulative[i + 1] - self.cumulative[i];
                best = (self.cumulative[i] + frac * piece, d);
            }
        }
        best
    }

    fn piece_at(&self, offset_m: f64) -> usize {
        let n = self.polyline.len() - 1;
        match self.cumulative.binary_search_by(|c| c.total_cmp(&offset_m)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Point at the given arc offset (clamped to the segment).
    pub fn point_at(&self, offset_m: f64) -> GeoPoint {
        let offset_m = offset_m.clamp(0.0, self.length_m());
        let i = self.piece_at(offset_m);
        let piece = self.cumulative[i + 1] - self.cumulative[i];
        let frac = if piece > 0.0 {
            (offset_m - self.cumulative[i]) / piece
        } else {
            0.0
        };
        self.polyline[i].lerp(&self.polyline[i + 1], frac)
    }

    /// Polyline heading at the given arc offset, degrees in `[0, 360)`.
    pub fn bearing_at(&self, offset_m: f64) -> f64 {
        let offset_m = offset_m.clamp(0.0, self.length_m());
        let start = self.piece_at(offset_m);
        // zero-length pieces have no heading; look forward, then backward
        let n = self.polyline.len() - 1;
        let order = (start..n).chain((0..start).rev());
        for i in order {
            if let Ok(b) = bearing(&self.polyline[i], &self.polyline[i + 1]) {
                return b;
            }
        }
        0.0
    }
}

/// Key used to merge segment endpoints into graph nodes (1e-7 degrees).
fn node_key(p: &GeoPoint) -> (i64, i64) {
    ((p.lat() * 1e7).round() as i64, (p.lon() * 1e7).round() as i64)
}

/// Immutable road network. Safe to share between threads.
#[derive(Debug)]
pub struct RoadNetwork {
    segments: Vec<RoadSegment>,
    by_id: HashMap<SegmentId, usize>,
    /// (start node, end node) per segment.
    endpoints: Vec<[usize; 2]>,
    /// Incident segment indices per node.
    incident: Vec<Vec<usize>>,
    states: Vec<HiddenState>,
    /// Range of `states` belonging to each segment.
    segment_states: Vec<Range<usize>>,
    state_segment: Vec<usize>,
    index: StateIndex,
}

impl RoadNetwork {
    pub fn from_segments(specs: Vec<SegmentSpec>) -> Result<Self, NetworkError> {
        if specs.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut segments = specs
            .into_iter()
            .map(RoadSegment::new)
            .collect::<Result<Vec<_>, _>>()?;
        segments.sort_by_key(|s| s.id);
        let mut by_id = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if by_id.insert(s.id, i).is_some() {
                return Err(NetworkError::DuplicateSegment(s.id));
            }
        }

        let mut node_ids: HashMap<(i64, i64), usize> = HashMap::new();
        let mut incident: Vec<Vec<usize>> = Vec::new();
        let mut endpoints = Vec::with_capacity(segments.len());
        for (si, seg) in segments.iter().enumerate() {
            let mut ends = [0usize; 2];
            for (k, p) in [seg.start(), seg.end()].iter().enumerate() {
                let next = node_ids.len();
                let nid = *node_ids.entry(node_key(p)).or_insert(next);
                if nid == incident.len() {
                    incident.push(Vec::new());
                }
                if !incident[nid].contains(&si) {
                    incident[nid].push(si);
                }
                ends[k] = nid;
            }
            endpoints.push(ends);
        }

        let mut states = Vec::new();
        let mut segment_states = Vec::with_capacity(segments.len());
        let mut state_segment = Vec::new();
        for (si, seg) in segments.iter().enumerate() {
            let begin = states.len();
            for lm in &seg.landmarks {
                let id = StateId(states.len() as u32);
                states.push(HiddenState {
                    id,
                    segment_id: seg.id,
                    kind: lm.kind,
                    loc: lm.loc,
                    bearing_deg: seg.bearing_at(lm.offset_m),
                    offset_m: lm.offset_m,
                });
                state_segment.push(si);
            }
            segment_states.push(begin..states.len());
        }
        let index = StateIndex::build(&states);
        Ok(RoadNetwork {
            segments,
            by_id,
            endpoints,
            incident,
            states,
            segment_states,
            state_segment,
            index,
        })
    }

    /// Reads a network in the given format.
    pub fn load<R: Read>(source: R, format: NetworkFormat) -> Result<Self, NetworkError> {
        match format {
            NetworkFormat::GeoJson => read_geojson(source),
        }
    }

    /// Segments ordered by id.
    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&RoadSegment> {
        self.by_id.get(&id).map(|&i| &self.segments[i])
    }

    /// The full state space, ordered by id.
    pub fn states(&self) -> &[HiddenState] {
        &self.states
    }

    pub fn state(&self, id: StateId) -> Option<&HiddenState> {
        self.states.get(id.index())
    }

    /// States lying on the given segment, ordered by offset.
    pub fn segment_states(&self, id: SegmentId) -> &[HiddenState] {
        match self.by_id.get(&id) {
            Some(&i) => &self.states[self.segment_states[i].clone()],
            None => &[],
        }
    }

    pub fn node_count(&self) -> usize {
        self.incident.len()
    }

    /// Segments sharing an endpoint with `id` (excluding `id` itself).
    pub fn neighbors(&self, id: SegmentId) -> Vec<SegmentId> {
        let Some(&si) = self.by_id.get(&id) else {
            return Vec::new();
        };
        let mut out: Vec<SegmentId> = self.endpoints[si]
            .iter()
            .flat_map(|&n| self.incident[n].iter())
            .filter(|&&o| o != si)
            .map(|&o| self.segments[o].id)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// All states within `radius_m` of `center`, ordered by id.
    pub fn query_radius(&self, center: &GeoPoint, radius_m: f64) -> Vec<&HiddenState> {
        self.index
            .within(center, radius_m, &self.states)
            .into_iter()
            .map(|i| &self.states[i])
            .collect()
    }

    pub fn total_length_m(&self) -> f64 {
        self.segments.iter().map(RoadSegment::length_m).sum()
    }

    fn checked_state(&self, id: StateId) -> Result<&HiddenState, NetworkError> {
        self.state(id).ok_or(NetworkError::UnknownState(id))
    }

    /// True iff `to` can be reached from `from` along the network within
    /// `max_travel_m` meters of travel. A state on the same segment is
    /// always reachable.
    pub fn connected(&self, from: StateId, to: StateId, max_travel_m: f64) -> Result<bool, NetworkError> {
        let to = *self.checked_state(to)?;
        let reach = self.reach_from(from, max_travel_m)?;
        Ok(reach.distance_to(&to).is_some())
    }

    /// Landmarks strictly between two states along the shortest path, in
    /// traversal order.
    pub fn semantics_between(
        &self,
        from: StateId,
        to: StateId,
    ) -> Result<Vec<SemanticLandmark>, NetworkError> {
        let target = *self.checked_state(to)?;
        let reach = self.reach_from(from, f64::INFINITY)?;
        reach.skipped(&target).ok_or(NetworkError::Unreachable(from, to))
    }

    /// Shortest sequence of segments leading from one state to another,
    /// both end segments included.
    pub fn segment_path(&self, from: StateId, to: StateId) -> Result<Vec<SegmentId>, NetworkError> {
        let target = *self.checked_state(to)?;
        let reach = self.reach_from(from, f64::INFINITY)?;
        reach
            .path_to(&target)
            .map(|p| p.segments.iter().map(|&(s, _)| s).collect())
            .ok_or(NetworkError::Unreachable(from, to))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkFormat {
    GeoJson,
}

/// Reads a network from a byte stream.
pub fn load_network<R: Read>(source: R, format: NetworkFormat) -> Result<RoadNetwork, NetworkError> {
    RoadNetwork::load(source, format)
}
