use super::{HmmConfig, MatchError, Observation};
use crate::roadnet::{HiddenState, Reach, RoadNetwork};

/// Number of times the search radius is doubled when fewer than
/// `min_candidates` states are in range.
pub const MAX_RADIUS_DOUBLINGS: u32 = 3;

/// Shortest time span used for the travel budget between steps, seconds.
pub const MIN_BUDGET_SPAN_S: f64 = 1.0;

/// Hidden states considered for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Index of the trellis step.
    pub step: usize,
    /// Observation time.
    pub t: f64,
    /// Candidates in ascending state id order.
    pub states: Vec<HiddenState>,
    /// Final search radius.
    pub radius_m: f64,
    /// The connectivity filter removed every state and the radius set was
    /// kept instead.
    pub connectivity_fallback: bool,
}

/// States within `err_scale * err_m` of the observation, the radius doubled
/// up to three times until `min_candidates` are found.
pub fn radius_candidates(network: &RoadNetwork, z: &Observation, cfg: &HmmConfig) -> (Vec<HiddenState>, f64) {
    let mut radius = cfg.err_scale * z.err_m;
    let mut states: Vec<HiddenState> = network
        .query_radius(&z.loc, radius)
        .into_iter()
        .copied()
        .collect();
    let mut doublings = 0;
    while states.len() < cfg.min_candidates && doublings < MAX_RADIUS_DOUBLINGS {
        radius *= 2.0;
        doublings += 1;
        states = network
            .query_radius(&z.loc, radius)
            .into_iter()
            .copied()
            .collect();
    }
    (states, radius)
}

/// Travel budget between two observation times.
pub fn travel_budget(cfg: &HmmConfig, dt: f64) -> f64 {
    cfg.max_speed_mps * dt.max(MIN_BUDGET_SPAN_S)
}

/// Bounded searches from each state of the previous step.
pub(crate) fn reaches<'a>(
    network: &'a RoadNetwork,
    prev: &CandidateSet,
    budget_m: f64,
) -> Result<Vec<Reach<'a>>, MatchError> {
    prev.states
        .iter()
        .map(|s| network.reach_from(s.id, budget_m).map_err(MatchError::from))
        .collect()
}

pub(crate) fn extract_with(
    network: &RoadNetwork,
    z: &Observation,
    step: usize,
    prev_reaches: Option<&[Reach<'_>]>,
    cfg: &HmmConfig,
) -> Result<CandidateSet, MatchError> {
    let (states, radius_m) = radius_candidates(network, z, cfg);
    if states.is_empty() {
        return Err(MatchError::NoCandidates { t: z.t, radius_m });
    }
    let mut set = CandidateSet {
        step,
        t: z.t,
        states,
        radius_m,
        connectivity_fallback: false,
    };
    if let Some(reaches) = prev_reaches {
        let kept: Vec<HiddenState> = set
            .states
            .iter()
            .filter(|s| reaches.iter().any(|r| r.distance_to(s).is_some()))
            .copied()
            .collect();
        if kept.is_empty() {
            set.connectivity_fallback = true;
        } else {
            set.states = kept;
        }
    }
    Ok(set)
}

/// Candidate states for `z`: every state within the search radius and, when
/// a previous step exists, only those reachable from one of its candidates
/// within `max_speed_mps` times the elapsed time. If that filter leaves
/// nothing, the radius set is returned with `connectivity_fallback` set.
pub fn extract_candidates(
    network: &RoadNetwork,
    z: &Observation,
    prev: Option<&CandidateSet>,
    cfg: &HmmConfig,
) -> Result<CandidateSet, MatchError> {
    match prev {
        None => extract_with(network, z, 0, None, cfg),
        Some(p) => {
            let r = reaches(network, p, travel_budget(cfg, z.t - p.t))?;
            extract_with(network, z, p.step + 1, Some(&r), cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::fixtures::{east_segment, pt};
    use crate::roadnet::{SegmentId, SemanticType::*};

    fn obs(loc: crate::geo::GeoPoint, err: f64, t: f64) -> Observation {
        Observation {
            t,
            loc,
            err_m: err,
            heading_deg: 90.0,
            kind: Bump,
        }
    }

    #[test]
    fn isolated_landmark() {
        let o = pt(30.0, 31.0);
        let net = RoadNetwork::from_segments(vec![east_segment(
            1,
            o,
            5000.0,
            &[(Bump, 1000.0), (Turn, 4000.0)],
        )])
        .unwrap();
        let z = obs(o.offset_m(1000.0, 0.0), 100.0, 0.0);
        let c = extract_candidates(&net, &z, None, &HmmConfig::default()).unwrap();
        assert_eq!(c.states.len(), 1);
        assert_eq!(c.states[0].kind, Bump);
    }

    #[test]
    fn radius_grows_to_minimum() {
        let o = pt(30.0, 31.0);
        let net = RoadNetwork::from_segments(vec![east_segment(1, o, 5000.0, &[(Bump, 1000.0)])]).unwrap();
        let z = obs(o.offset_m(1000.0, 300.0), 100.0, 0.0);
        let cfg = HmmConfig::default();
        assert_eq!(radius_candidates(&net, &z, &cfg).0.len(), 1);
        let far = obs(o.offset_m(1000.0, 2000.0), 100.0, 0.0);
        assert!(matches!(
            extract_candidates(&net, &far, None, &cfg),
            Err(MatchError::NoCandidates { .. })
        ));
        let strict = HmmConfig {
            min_candidates: 0,
            ..cfg
        };
        assert!(radius_candidates(&net, &z, &strict).0.is_empty());
    }

    #[test]
    fn unreachable_falls_back() {
        let o = pt(30.0, 31.0);
        let a = east_segment(1, o, 1000.0, &[(Bump, 500.0)]);
        let b = east_segment(2, o.offset_m(0.0, 500.0), 1000.0, &[(Turn, 500.0)]);
        let net = RoadNetwork::from_segments(vec![a, b]).unwrap();
        let cfg = HmmConfig::default();
        let first = extract_candidates(&net, &obs(o.offset_m(500.0, 0.0), 50.0, 0.0), None, &cfg).unwrap();
        assert_eq!(first.states[0].segment_id, SegmentId(1));
        let z = obs(o.offset_m(500.0, 500.0), 50.0, 10.0);
        let c = extract_candidates(&net, &z, Some(&first), &cfg).unwrap();
        assert!(c.connectivity_fallback);
        assert_eq!(c.states[0].segment_id, SegmentId(2));
        assert_eq!(c.step, 1);
    }
}
