//! Semantic-event HMM map matcher.
//!
//! Hidden states are the network's landmarks. Each detected semantic event
//! is one observation; candidates are the landmarks near it that can be
//! reached from the previous step's candidates. An online Viterbi decoder
//! over a sliding window yields the matched landmark sequence.

mod candidates;
pub mod probability;
pub mod viterbi;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{geodesic_distance, wrap_deg, GeoPoint};
use crate::roadnet::{HiddenState, NetworkError, RoadNetwork, SegmentId, SemanticType, StateId};
use crate::semantics::{ConfusionMatrix, SemanticEvent};

pub use self::candidates::{
    extract_candidates, radius_candidates, travel_budget, CandidateSet, MAX_RADIUS_DOUBLINGS,
    MIN_BUDGET_SPAN_S,
};
pub use self::probability::{
    estimate_sigma_h, gaussian_log_pdf, initial_priors, log_sum_exp, observation_log_prob,
    state_heading_change, transition_log_from_parts, transition_log_prob, update_priors, TransitionMatrix,
};
pub use self::viterbi::{BrokenChain, Decoded, TrellisWindow};

/// HMM observations are detected semantic events.
pub type Observation = SemanticEvent;

/// Smallest heading-noise scale used, degrees.
pub const SIGMA_H_FLOOR_DEG: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no candidate states within {radius_m:.0} m of the observation at t={t}")]
    NoCandidates { t: f64, radius_m: f64 },
    #[error("no_class observations carry no landmark evidence")]
    NoClassObservation,
    #[error("observation at t={0} has a non-positive or non-finite error")]
    BadObservation(f64),
    #[error("observation at t={t} is earlier than the previous one at t={prev}")]
    OutOfOrder { t: f64, prev: f64 },
    #[error("heading calibration needs at least one pair")]
    NoCalibrationPairs,
    #[error("invalid matcher config: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    /// Heading-change noise scale, degrees.
    #[serde(alias = "sigma_h")]
    pub sigma_h_deg: f64,
    /// Trellis window length, steps.
    #[serde(alias = "window_T")]
    pub window: usize,
    /// Candidate radius as a multiple of the observation error.
    pub err_scale: f64,
    pub min_candidates: usize,
    /// Speed bound for the reachability budget between steps, m/s.
    pub max_speed_mps: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            sigma_h_deg: 10.0,
            window: 10,
            err_scale: 1.5,
            min_candidates: 1,
            max_speed_mps: 50.0,
        }
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.sigma_h_deg > 0.0 && self.sigma_h_deg.is_finite()) {
            return Err(MatchError::BadConfig("sigma_h must be positive"));
        }
        if self.window < 2 {
            return Err(MatchError::BadConfig("window must hold at least 2 steps"));
        }
        if !(self.err_scale > 0.0 && self.err_scale.is_finite()) {
            return Err(MatchError::BadConfig("err_scale must be positive"));
        }
        if !(self.max_speed_mps > 0.0) {
            return Err(MatchError::BadConfig("max_speed_mps must be positive"));
        }
        Ok(())
    }

    /// Heading-noise scale with the floor applied.
    pub fn effective_sigma_h(&self) -> f64 {
        self.sigma_h_deg.max(SIGMA_H_FLOOR_DEG)
    }
}

/// Which likelihood terms the matcher uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Model {
    /// Type-aware emissions, heading and skipped-landmark transitions,
    /// confusion-matrix priors.
    #[default]
    Semantic,
    /// Distance-only emissions with uniform transitions and priors.
    LocationOnly,
}

/// Online result for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    /// Current best state, `None` before the first successful step.
    pub state: Option<HiddenState>,
    /// Log score of that state.
    pub loglik: Option<f64>,
    /// No candidates were found; the previous output is repeated.
    pub stale: bool,
}

/// One line of the final output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub t: f64,
    #[serde(skip)]
    pub state: Option<StateId>,
    pub segment_id: Option<SegmentId>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub loglik: Option<f64>,
    pub stale: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchStats {
    pub steps: usize,
    pub stale_steps: usize,
    pub connectivity_fallbacks: usize,
    pub chain_restarts: usize,
    pub prior_fallbacks: usize,
}

/// Decoded sequence, one record per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    pub records: Vec<MatchRecord>,
    pub stats: MatchStats,
}

impl MatchOutput {
    /// Decoded state per observation; stale steps repeat the previous state.
    pub fn states(&self) -> Vec<Option<StateId>> {
        self.records.iter().map(|r| r.state).collect()
    }
}

enum Slot {
    Decoded(usize),
    Stale,
}

/// Incremental matcher for one trace.
pub struct Matcher<'a> {
    network: &'a RoadNetwork,
    confusion: &'a ConfusionMatrix,
    cfg: HmmConfig,
    model: Model,
    window: TrellisWindow,
    prev: Option<(CandidateSet, f64)>,
    slots: Vec<(f64, Slot)>,
    decoded_steps: usize,
    last: Option<StepOutput>,
    stats: MatchStats,
}

impl<'a> Matcher<'a> {
    pub fn new(
        network: &'a RoadNetwork,
        confusion: &'a ConfusionMatrix,
        cfg: HmmConfig,
    ) -> Result<Self, MatchError> {
        Self::with_model(network, confusion, cfg, Model::Semantic)
    }

    /// Location-only comparison matcher with the same candidate extraction.
    pub fn location_only(
        network: &'a RoadNetwork,
        confusion: &'a ConfusionMatrix,
        cfg: HmmConfig,
    ) -> Result<Self, MatchError> {
        Self::with_model(network, confusion, cfg, Model::LocationOnly)
    }

    pub fn with_model(
        network: &'a RoadNetwork,
        confusion: &'a ConfusionMatrix,
        cfg: HmmConfig,
        model: Model,
    ) -> Result<Self, MatchError> {
        cfg.validate()?;
        Ok(Matcher {
            network,
            confusion,
            cfg,
            model,
            window: TrellisWindow::new(cfg.window),
            prev: None,
            slots: Vec::new(),
            decoded_steps: 0,
            last: None,
            stats: MatchStats::default(),
        })
    }

    pub fn config(&self) -> &HmmConfig {
        &self.cfg
    }

    /// Processes one observation and returns the current best estimate.
    ///
    /// A step without candidates is not an error: it repeats the previous
    /// output with `stale` set.
    pub fn step(&mut self, z: &Observation) -> Result<StepOutput, MatchError> {
        if z.kind == SemanticType::NoClass {
            return Err(MatchError::NoClassObservation);
        }
        if !(z.err_m > 0.0 && z.err_m.is_finite()) {
            return Err(MatchError::BadObservation(z.t));
        }
        if let Some((p, _)) = &self.prev {
            if z.t < p.t {
                return Err(MatchError::OutOfOrder { t: z.t, prev: p.t });
            }
        }
        self.stats.steps += 1;

        let reaches = match &self.prev {
            Some((p, _)) => Some(candidates::reaches(
                self.network,
                p,
                travel_budget(&self.cfg, z.t - p.t),
            )?),
            None => None,
        };
        let step_index = self.decoded_steps;
        let cands = match candidates::extract_with(self.network, z, step_index, reaches.as_deref(), &self.cfg)
        {
            Ok(c) => c,
            Err(MatchError::NoCandidates { radius_m, .. }) => {
                log::debug!("no candidates within {radius_m:.0} m at t={}", z.t);
                self.stats.stale_steps += 1;
                self.slots.push((z.t, Slot::Stale));
                let out = StepOutput {
                    t: z.t,
                    state: self.last.and_then(|l| l.state),
                    loglik: self.last.and_then(|l| l.loglik),
                    stale: true,
                };
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        self.stats.connectivity_fallbacks += usize::from(cands.connectivity_fallback);

        let ids: Vec<StateId> = cands.states.iter().map(|s| s.id).collect();
        let obs = self.emissions(z, &cands.states);
        let extended = match (&self.prev, &reaches) {
            (Some((_, prev_heading)), Some(reaches)) => {
                let trans = self.transitions(reaches, &cands.states, wrap_deg(z.heading_deg - prev_heading));
                self.window.extend(ids.clone(), obs.clone(), trans).is_ok()
            }
            _ => false,
        };
        if !extended {
            if self.prev.is_some() {
                self.stats.chain_restarts += 1;
                log::debug!("decoding chain broken at t={}; restarting", z.t);
            }
            let prior = self.priors(z, &cands.states);
            self.window.start(ids, prior, obs);
        }
        self.slots.push((z.t, Slot::Decoded(step_index)));
        self.decoded_steps += 1;
        self.prev = Some((cands, z.heading_deg));

        let head = self.window.head().expect("window holds the new step");
        let out = StepOutput {
            t: z.t,
            state: self.network.state(head.state).copied(),
            loglik: Some(head.score),
            stale: false,
        };
        self.last = Some(out);
        Ok(out)
    }

    fn emissions(&self, z: &Observation, states: &[HiddenState]) -> Vec<f64> {
        match self.model {
            Model::Semantic => states
                .iter()
                .map(|s| observation_log_prob(z, s, self.confusion))
                .collect(),
            Model::LocationOnly => states
                .iter()
                .map(|s| gaussian_log_pdf(geodesic_distance(&z.loc, &s.loc), z.err_m))
                .collect(),
        }
    }

    fn priors(&mut self, z: &Observation, states: &[HiddenState]) -> Vec<f64> {
        match self.model {
            Model::Semantic => {
                let (p, fallback) = initial_priors(states, z, self.confusion);
                self.stats.prior_fallbacks += usize::from(fallback);
                p
            }
            Model::LocationOnly => vec![-(states.len() as f64).ln(); states.len()],
        }
    }

    fn transitions(
        &self,
        reaches: &[crate::roadnet::Reach<'_>],
        states: &[HiddenState],
        dtheta_z: f64,
    ) -> TransitionMatrix {
        let sigma_h = self.cfg.effective_sigma_h();
        match self.model {
            Model::Semantic => {
                let mut skipped = Vec::new();
                TransitionMatrix::from_fn(reaches.len(), states.len(), |i, j| {
                    let r = &reaches[i];
                    skipped.clear();
                    if !r.for_each_skipped(&states[j], |l| skipped.push(l.kind)) {
                        return f64::NEG_INFINITY;
                    }
                    let dtheta_s = state_heading_change(r.source(), &states[j], dtheta_z);
                    transition_log_from_parts(
                        dtheta_z,
                        dtheta_s,
                        skipped.iter().copied(),
                        self.confusion,
                        sigma_h,
                    )
                })
            }
            Model::LocationOnly => {
                TransitionMatrix::new(reaches.len(), states.len(), -(states.len() as f64).ln())
            }
        }
    }

    /// Decoded states so far: committed steps followed by the best path
    /// through the open window.
    pub fn decoded(&self) -> Vec<Decoded> {
        self.window.decoded()
    }

    /// Number of steps whose decoded state can no longer change.
    pub fn committed_len(&self) -> usize {
        self.window.committed_len()
    }

    pub fn stats(&self) -> MatchStats {
        let mut s = self.stats;
        s.prior_fallbacks += self.window.prior_fallbacks();
        s
    }

    /// Flushes the window and returns the decoded sequence.
    pub fn finish(self) -> MatchOutput {
        let stats = self.stats();
        let decoded = self.window.finish();
        let mut records = Vec::with_capacity(self.slots.len());
        let mut last: Option<MatchRecord> = None;
        for (t, slot) in self.slots {
            let rec = match slot {
                Slot::Decoded(k) => {
                    let d = decoded[k];
                    let s = self.network.state(d.state).expect("decoded states exist");
                    MatchRecord {
                        t,
                        state: Some(d.state),
                        segment_id: Some(s.segment_id),
                        lat: Some(s.loc.lat()),
                        lon: Some(s.loc.lon()),
                        loglik: d.score.is_finite().then_some(d.score),
                        stale: false,
                    }
                }
                Slot::Stale => match last {
                    Some(prev) => MatchRecord {
                        t,
                        stale: true,
                        ..prev
                    },
                    None => MatchRecord {
                        t,
                        state: None,
                        segment_id: None,
                        lat: None,
                        lon: None,
                        loglik: None,
                        stale: true,
                    },
                },
            };
            last = Some(rec);
            records.push(rec);
        }
        MatchOutput { records, stats }
    }
}

/// Matches a whole observation sequence.
pub fn match_observations(
    network: &RoadNetwork,
    confusion: &ConfusionMatrix,
    cfg: HmmConfig,
    model: Model,
    observations: &[Observation],
) -> Result<MatchOutput, MatchError> {
    let mut m = Matcher::with_model(network, confusion, cfg, model)?;
    for z in observations {
        m.step(z)?;
    }
    Ok(m.finish())
}

/// Location of a record, when it has one.
pub fn record_location(r: &MatchRecord) -> Option<GeoPoint> {
    match (r.lat, r.lon) {
        (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).ok(),
        _ => None,
    }
}
