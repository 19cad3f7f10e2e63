//! Synthetic road networks, drives and positioning noise.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, SegmentPath};
use crate::geo::{geodesic_distance, normalize_deg, wrap_deg, GeoPoint};
use crate::matcher::state_heading_change;
use crate::preprocess::{RawFix, SensorSample};
use crate::roadnet::{HiddenState, NetworkError, RoadNetwork, SegmentId, SegmentSpec, SemanticType, StateId};
use crate::semantics::{ConfusionMatrix, SemanticEvent};

/// Mean of a unit Rayleigh distribution, `sqrt(pi / 2)`.
pub const RAYLEIGH_MEAN: f64 = 1.2533141373155003;

/// Standard gravity, m/s².
const GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    BadGrid(&'static str),
    #[error("invalid noise model: {0}")]
    BadNoise(&'static str),
    #[error("unknown noise preset {0:?}")]
    UnknownPreset(String),
    #[error("network has no segments to drive on")]
    EmptyNetwork,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Generator RNG for a seed, one independent stream per purpose.
fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const STREAM_NETWORK: u64 = 1;
const STREAM_ROUTE: u64 = 2;
const STREAM_EVENTS: u64 = 3;
const STREAM_FIXES: u64 = 4;
const STREAM_SENSORS: u64 = 5;
const STREAM_TELEPORTS: u64 = 6;

/// Relative landmark frequencies proportional to the in-vehicle
/// confusion counts, in `SemanticType::LANDMARKS` order.
pub const DEFAULT_TYPE_MIX: [f64; 7] = [27.0, 37.0, 33.0, 14.0, 15.0, 55.0, 12.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Intersections per column.
    pub rows: usize,
    /// Intersections per row.
    pub cols: usize,
    pub segment_length_m: f64,
    /// Mean landmarks per km of road.
    pub density_per_km: f64,
    pub type_mix: [f64; 7],
    /// South-west corner.
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for GridSpec {
    /// 6 x 6 intersections, 60 segments, 50 km of road.
    fn default() -> Self {
        GridSpec {
            rows: 6,
            cols: 6,
            segment_length_m: 50_000.0 / 60.0,
            density_per_km: 2.0,
            type_mix: DEFAULT_TYPE_MIX,
            origin_lat: 30.0,
            origin_lon: 31.2,
        }
    }
}

impl GridSpec {
    pub fn segment_count(&self) -> usize {
        self.rows * (self.cols - 1) + (self.rows - 1) * self.cols
    }

    pub fn total_length_m(&self) -> f64 {
        self.segment_count() as f64 * self.segment_length_m
    }

    fn validate(&self) -> Result<GeoPoint, SimError> {
        if self.rows < 1 || self.cols < 1 || self.rows * self.cols < 2 {
            return Err(SimError::BadGrid("need at least two intersections"));
        }
        if !(self.segment_length_m > 0.0 && self.segment_length_m.is_finite()) {
            return Err(SimError::BadGrid("segment length must be positive"));
        }
        if !(self.density_per_km >= 0.0 && self.density_per_km.is_finite()) {
            return Err(SimError::BadGrid("density must be non-negative"));
        }
        if self.type_mix.iter().any(|w| !(*w >= 0.0)) || self.type_mix.iter().sum::<f64>() <= 0.0 {
            return Err(SimError::BadGrid("type mix needs a positive weight"));
        }
        GeoPoint::new(self.origin_lat, self.origin_lon).map_err(|_| SimError::BadGrid("bad origin"))
    }
}

/// Builds a rectangular grid of straight two-way segments with landmarks
/// placed by a Poisson process along every segment.
pub fn generate_network(spec: &GridSpec, seed: u64) -> Result<RoadNetwork, SimError> {
    let origin = spec.validate()?;
    let mut rng = rng(seed, STREAM_NETWORK);
    let kinds = WeightedIndex::new(spec.type_mix).map_err(|_| SimError::BadGrid("bad type mix"))?;
    let gap =
        (spec.density_per_km > 0.0).then(|| Exp::new(spec.density_per_km / 1000.0).expect("positive rate"));
    let node = |r: usize, c: usize| {
        origin.offset_m(c as f64 * spec.segment_length_m, r as f64 * spec.segment_length_m)
    };
    let mut ends = Vec::with_capacity(spec.segment_count());
    for r in 0..spec.rows {
        for c in 0..spec.cols.saturating_sub(1) {
            ends.push((node(r, c), node(r, c + 1)));
        }
    }
    for r in 0..spec.rows.saturating_sub(1) {
        for c in 0..spec.cols {
            ends.push((node(r, c), node(r + 1, c)));
        }
    }
    let specs = ends
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let len = geodesic_distance(&a, &b);
            let mut landmarks = Vec::new();
            if let Some(gap) = &gap {
                let mut at = gap.sample(&mut rng);
                while at < len {
                    let kind = SemanticType::LANDMARKS[kinds.sample(&mut rng)];
                    landmarks.push((kind, a.lerp(&b, at / len)));
                    at += gap.sample(&mut rng);
                }
            }
            SegmentSpec {
                id: SegmentId(i as u64 + 1),
                polyline: vec![a, b],
                speed_limit_mps: Some(50.0 / 3.6),
                landmarks,
            }
        })
        .collect();
    Ok(RoadNetwork::from_segments(specs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub length_m: f64,
    /// Nominal speed, m/s.
    pub speed_mps: f64,
    /// Per-segment speed jitter as a fraction of the nominal speed.
    pub speed_jitter: f64,
}

impl Default for DriveSpec {
    fn default() -> Self {
        DriveSpec {
            length_m: 10_000.0,
            speed_mps: 14.0,
            speed_jitter: 0.1,
        }
    }
}

/// One segment pass of a simulated drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub segment_id: SegmentId,
    /// Travelling along the polyline direction.
    pub forward: bool,
    pub t_enter: f64,
    pub speed_mps: f64,
    pub length_m: f64,
}

impl Traversal {
    pub fn t_exit(&self) -> f64 {
        self.t_enter + self.length_m / self.speed_mps
    }

    /// Polyline offset after travelling `d` meters into the segment.
    fn offset(&self, d: f64) -> f64 {
        if self.forward {
            d
        } else {
            self.length_m - d
        }
    }
}

/// Ground-truth position sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthFix {
    pub t: f64,
    pub loc: GeoPoint,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub traversals: Vec<Traversal>,
    pub path: SegmentPath,
    /// 1 Hz ground truth.
    pub truth: Vec<TruthFix>,
    /// The walk hit a dead end before reaching the requested length.
    pub truncated: bool,
}

fn node_key(p: &GeoPoint) -> (i64, i64) {
    ((p.lat() * 1e7).round() as i64, (p.lon() * 1e7).round() as i64)
}

/// Random walk over whole segments, never turning straight back onto the
/// segment just driven, until `length_m` is covered.
pub fn sample_route(network: &RoadNetwork, drive: &DriveSpec, seed: u64) -> Result<Route, SimError> {
    let segs = network.segments();
    if segs.is_empty() {
        return Err(SimError::EmptyNetwork);
    }
    let mut rng = rng(seed, STREAM_ROUTE);
    let mut at_node: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, s) in segs.iter().enumerate() {
        at_node.entry(node_key(&s.start())).or_default().push(i);
        let e = node_key(&s.end());
        if e != node_key(&s.start()) {
            at_node.entry(e).or_default().push(i);
        }
    }
    let mut cur = rng.random_range(0..segs.len());
    let mut forward = rng.random_bool(0.5);
    let mut t = 0.0;
    let mut covered = 0.0;
    let mut traversals = Vec::new();
    let mut truncated = false;
    loop {
        let seg = &segs[cur];
        let speed = drive.speed_mps * (1.0 + drive.speed_jitter * rng.random_range(-1.0..=1.0));
        let tr = Traversal {
            segment_id: seg.id(),
            forward,
            t_enter: t,
            speed_mps: speed,
            length_m: seg.length_m(),
        };
        t = tr.t_exit();
        covered += tr.length_m;
        traversals.push(tr);
        if covered >= drive.length_m {
            break;
        }
        let exit = if forward { seg.end() } else { seg.start() };
        let options: Vec<usize> = at_node
            .get(&node_key(&exit))
            .map(|v| v.iter().copied().filter(|&s| s != cur).collect())
            .unwrap_or_default();
        if options.is_empty() {
            truncated = true;
            break;
        }
        cur = options[rng.random_range(0..options.len())];
        forward = node_key(&segs[cur].start()) == node_key(&exit);
    }
    let path = SegmentPath::new(traversals.iter().map(|tr| (tr.segment_id, tr.length_m)))?;
    let truth = truth_fixes(network, &traversals);
    Ok(Route {
        traversals,
        path,
        truth,
        truncated,
    })
}

fn truth_fixes(network: &RoadNetwork, traversals: &[Traversal]) -> Vec<TruthFix> {
    let Some(last) = traversals.last() else {
        return Vec::new();
    };
    let end = last.t_exit();
    let mut out = Vec::new();
    let mut k = 0;
    let mut step = 0u64;
    loop {
        let t = step as f64;
        if t > end {
            break;
        }
        while k + 1 < traversals.len() && t >= traversals[k].t_exit() {
            k += 1;
        }
        let tr = &traversals[k];
        let seg = network.segment(tr.segment_id).expect("route segments exist");
        let d = ((t - tr.t_enter) * tr.speed_mps).clamp(0.0, tr.length_m);
        let off = tr.offset(d);
        let b = seg.bearing_at(off);
        out.push(TruthFix {
            t,
            loc: seg.point_at(off),
            heading_deg: if tr.forward { b } else { normalize_deg(b + 180.0) },
        });
        step += 1;
    }
    out
}

/// Positioning error regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub name: String,
    /// Mean radial error, meters.
    pub err_mean_m: f64,
    pub updates_per_km: f64,
    pub pingpong_prob: f64,
    pub pingpong_depth: usize,
}

impl NoiseModel {
    pub fn cellular() -> Self {
        NoiseModel {
            name: "cellular".into(),
            err_mean_m: 1900.0,
            updates_per_km: 1.4,
            pingpong_prob: 0.1,
            pingpong_depth: 2,
        }
    }

    pub fn network() -> Self {
        NoiseModel {
            name: "network".into(),
            err_mean_m: 162.0,
            updates_per_km: 6.8,
            pingpong_prob: 0.25,
            pingpong_depth: 2,
        }
    }

    pub fn gps_sparse() -> Self {
        NoiseModel {
            name: "gps_sparse".into(),
            err_mean_m: 19.0,
            updates_per_km: 0.6,
            pingpong_prob: 0.0,
            pingpong_depth: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self, SimError> {
        match name {
            "cellular" => Ok(Self::cellular()),
            "network" => Ok(Self::network()),
            "gps_sparse" | "gps" => Ok(Self::gps_sparse()),
            other => Err(SimError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.err_mean_m > 0.0 && self.err_mean_m.is_finite()) {
            return Err(SimError::BadNoise("err_mean_m must be positive"));
        }
        if !(self.updates_per_km > 0.0 && self.updates_per_km.is_finite()) {
            return Err(SimError::BadNoise("updates_per_km must be positive"));
        }
        if !(0.0..1.0).contains(&self.pingpong_prob) {
            return Err(SimError::BadNoise("pingpong_prob must lie in [0, 1)"));
        }
        if self.pingpong_prob > 0.0 && self.pingpong_depth == 0 {
            return Err(SimError::BadNoise("ping-pong needs a positive depth"));
        }
        Ok(())
    }

    /// Per-axis standard deviation giving the configured mean radial error.
    pub fn sigma_m(&self) -> f64 {
        self.err_mean_m / RAYLEIGH_MEAN
    }
}

/// Adds isotropic Gaussian noise with per-axis standard deviation `sigma`.
fn jitter<R: Rng>(p: &GeoPoint, sigma: f64, rng: &mut R) -> GeoPoint {
    if sigma <= 0.0 {
        return *p;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    let (e, north) = (n.sample(rng), n.sample(rng));
    p.offset_m(e, north)
}

/// A simulated detection together with the landmark that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub event: SemanticEvent,
    pub true_state: StateId,
}

/// Heading noise on simulated event headings, degrees.
pub const EVENT_HEADING_SIGMA_DEG: f64 = 3.0;

/// One detection attempt per landmark passed. The detected type is drawn
/// from the landmark's confusion row; a `NoClass` draw is a miss and emits
/// nothing. Event locations carry the noise model's position error.
pub fn emit_semantic_events(
    route: &Route,
    network: &RoadNetwork,
    confusion: &ConfusionMatrix,
    noise: &NoiseModel,
    seed: u64,
) -> Vec<SimEvent> {
    let mut rng = rng(seed, STREAM_EVENTS);
    let heading_noise = Normal::new(0.0, EVENT_HEADING_SIGMA_DEG).expect("finite sigma");
    let sigma = noise.sigma_m();
    let mut out = Vec::new();
    for tr in &route.traversals {
        let seg = network.segment(tr.segment_id).expect("route segments exist");
        let mut states: Vec<&HiddenState> = network.segment_states(tr.segment_id).iter().collect();
        if !tr.forward {
            states.reverse();
        }
        for s in states {
            let row = confusion.row(s.kind).expect("network states are landmarks");
            let detected = SemanticType::ALL[WeightedIndex::new(row).expect("row has mass").sample(&mut rng)];
            let d = if tr.forward {
                s.offset_m
            } else {
                tr.length_m - s.offset_m
            };
            let heading_noise = heading_noise.sample(&mut rng);
            let loc = jitter(&s.loc, sigma, &mut rng);
            if detected == SemanticType::NoClass {
                continue;
            }
            let b = seg.bearing_at(s.offset_m);
            let travel = if tr.forward { b } else { b + 180.0 };
            out.push(SimEvent {
                event: SemanticEvent {
                    t: tr.t_enter + d / tr.speed_mps,
                    loc,
                    err_m: noise.err_mean_m,
                    heading_deg: normalize_deg(travel + heading_noise),
                    kind: detected,
                },
                true_state: s.id,
            });
        }
    }
    out
}

/// Corrupted fixes plus the indices that repeat an earlier location.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedFixes {
    pub fixes: Vec<RawFix>,
    pub pingpong_indices: Vec<usize>,
}

/// Subsamples truth to one fix per `1000 / updates_per_km` meters driven,
/// adds isotropic Gaussian noise and occasionally repeats one of the last
/// `pingpong_depth` emitted locations. The first truth fix is always kept.
pub fn corrupt_positions(truth: &[TruthFix], noise: &NoiseModel, seed: u64) -> CorruptedFixes {
    let mut rng = rng(seed, STREAM_FIXES);
    let spacing = 1000.0 / noise.updates_per_km;
    let sigma = noise.sigma_m();
    let mut fixes: Vec<RawFix> = Vec::new();
    let mut pingpong_indices = Vec::new();
    let mut driven = 0.0;
    let mut next = 0.0;
    for (i, f) in truth.iter().enumerate() {
        if i > 0 {
            driven += geodesic_distance(&truth[i - 1].loc, &f.loc);
        }
        if driven + 1e-9 < next {
            continue;
        }
        while next <= driven + 1e-9 {
            next += spacing;
        }
        let mut loc = jitter(&f.loc, sigma, &mut rng);
        let depth = noise.pingpong_depth.min(fixes.len());
        if depth > 0 && noise.pingpong_prob > 0.0 && rng.random_bool(noise.pingpong_prob) {
            loc = fixes[fixes.len() - 1 - rng.random_range(0..depth)].loc;
            pingpong_indices.push(fixes.len());
        }
        fixes.push(RawFix {
            t: f.t,
            loc,
            err_m: noise.err_mean_m,
        });
    }
    CorruptedFixes {
        fixes,
        pingpong_indices,
    }
}

/// Moves `count` randomly chosen fixes (never the first) 5 to 50 km in a
/// random direction. Returns the affected indices in ascending order.
pub fn inject_teleports(fixes: &mut [RawFix], count: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng(seed, STREAM_TELEPORTS);
    if fixes.len() < 2 {
        return Vec::new();
    }
    let idx = rand::seq::index::sample(&mut rng, fixes.len() - 1, count.min(fixes.len() - 1));
    let mut out: Vec<usize> = idx.into_iter().map(|i| i + 1).collect();
    out.sort_unstable();
    for &i in &out {
        let dist = rng.random_range(5_000.0..=50_000.0);
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        fixes[i].loc = fixes[i].loc.offset_m(dist * dir.sin(), dist * dir.cos());
    }
    out
}

/// Inertial stream matching the truth: heading plus Gaussian noise and
/// gravity near 9.81 m/s².
pub fn synthesize_sensors(truth: &[TruthFix], heading_sigma_deg: f64, seed: u64) -> Vec<SensorSample> {
    let mut rng = rng(seed, STREAM_SENSORS);
    let h = Normal::new(0.0, heading_sigma_deg.max(0.0)).expect("finite sigma");
    let g = Normal::new(GRAVITY, 0.05).expect("finite sigma");
    truth
        .iter()
        .map(|f| SensorSample {
            t: f.t,
            gravity_accel: g.sample(&mut rng),
            heading_deg: normalize_deg(f.heading_deg + h.sample(&mut rng)),
        })
        .collect()
}

/// Observed and map heading changes between consecutive simulated events,
/// the input to heading-noise calibration.
pub fn heading_pairs(events: &[SimEvent], network: &RoadNetwork) -> Vec<(f64, f64)> {
    events
        .windows(2)
        .filter_map(|w| {
            let a = network.state(w[0].true_state)?;
            let b = network.state(w[1].true_state)?;
            let dz = wrap_deg(w[1].event.heading_deg - w[0].event.heading_deg);
            Some((dz, state_heading_change(a, b, dz)))
        })
        .collect()
}

/// A complete simulated drive.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub route: Route,
    pub events: Vec<SimEvent>,
    pub fixes: CorruptedFixes,
    pub sensors: Vec<SensorSample>,
}

/// Sensor heading noise used by [`simulate`], degrees.
pub const SENSOR_HEADING_SIGMA_DEG: f64 = 1.0;

pub fn simulate(
    network: &RoadNetwork,
    drive: &DriveSpec,
    confusion: &ConfusionMatrix,
    noise: &NoiseModel,
    seed: u64,
) -> Result<SimTrace, SimError> {
    noise.validate()?;
    let route = sample_route(network, drive, seed)?;
    let events = emit_semantic_events(&route, network, confusion, noise, seed);
    let fixes = corrupt_positions(&route.truth, noise, seed);
    let sensors = synthesize_sensors(&route.truth, SENSOR_HEADING_SIGMA_DEG, seed);
    Ok(SimTrace {
        route,
        events,
        fixes,
        sensors,
    })
}
