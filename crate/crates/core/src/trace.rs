//! JSON-lines trace format and assembly of HMM observations from a trace.
//!
//! Each line is one record, distinguished by its fields:
//!
//! - event: `{"t", "type", "heading_deg"?, "lat"?, "lon"?, "err_m"?}`
//! - features: `{"t", "features": {...}, "heading_deg"?}`
//! - fix: `{"t", "lat", "lon", "err_m"}`
//! - sensor: `{"t", "heading_deg", "gvar"}`

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{bearing, GeoError, GeoPoint};
use crate::matcher::{match_observations, HmmConfig, MatchError, MatchOutput, Model, Observation};
use crate::preprocess::{
    heading_at, preprocess_fixes, smooth_sensors, CleanFix, FilterConfig, PreprocessError, RawFix,
    SensorSample,
};
use crate::roadnet::{RoadNetwork, SemanticType};
use crate::semantics::{classify, ConfusionMatrix, FeatureVector, Thresholds};
use crate::sim::SimTrace;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Coordinate {
        line: usize,
        #[source]
        source: GeoError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceRecord {
    Event {
        t: f64,
        #[serde(rename = "type")]
        kind: SemanticType,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heading_deg: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lat: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        err_m: Option<f64>,
    },
    Features {
        t: f64,
        features: FeatureVector,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heading_deg: Option<f64>,
    },
    Fix {
        t: f64,
        lat: f64,
        lon: f64,
        err_m: f64,
    },
    Sensor {
        t: f64,
        heading_deg: f64,
        gvar: f64,
    },
}

impl TraceRecord {
    pub fn t(&self) -> f64 {
        match *self {
            TraceRecord::Event { t, .. }
            | TraceRecord::Features { t, .. }
            | TraceRecord::Fix { t, .. }
            | TraceRecord::Sensor { t, .. } => t,
        }
    }
}

/// A semantic event before location and heading are filled in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingEvent {
    pub t: f64,
    pub kind: SemanticType,
    pub heading_deg: Option<f64>,
    pub loc: Option<GeoPoint>,
    pub err_m: Option<f64>,
}

/// A parsed trace, each stream sorted by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub fixes: Vec<RawFix>,
    pub sensors: Vec<SensorSample>,
    pub events: Vec<PendingEvent>,
    /// Feature records the decision tree classified as no landmark.
    pub dropped_no_class: usize,
}

impl Trace {
    pub fn push(&mut self, rec: TraceRecord, line: usize, th: &Thresholds) -> Result<(), TraceError> {
        let point = |lat: f64, lon: f64| {
            GeoPoint::new(lat, lon).map_err(|source| TraceError::Coordinate { line, source })
        };
        match rec {
            TraceRecord::Event {
                t,
                kind,
                heading_deg,
                lat,
                lon,
                err_m,
            } => {
                let loc = match (lat, lon) {
                    (Some(lat), Some(lon)) => Some(point(lat, lon)?),
                    _ => None,
                };
                self.push_event(PendingEvent {
                    t,
                    kind,
                    heading_deg,
                    loc,
                    err_m,
                });
            }
            TraceRecord::Features {
                t,
                features,
                heading_deg,
            } => {
                let kind = classify(&features, th);
                self.push_event(PendingEvent {
                    t,
                    kind,
                    heading_deg,
                    loc: None,
                    err_m: None,
                });
            }
            TraceRecord::Fix { t, lat, lon, err_m } => self.fixes.push(RawFix {
                t,
                loc: point(lat, lon)?,
                err_m,
            }),
            TraceRecord::Sensor { t, heading_deg, gvar } => self.sensors.push(SensorSample {
                t,
                gravity_accel: gvar,
                heading_deg,
            }),
        }
        Ok(())
    }

    fn push_event(&mut self, e: PendingEvent) {
        if e.kind == SemanticType::NoClass {
            self.dropped_no_class += 1;
        } else {
            self.events.push(e);
        }
    }

    fn sort(&mut self) {
        self.fixes.sort_by(|a, b| a.t.total_cmp(&b.t));
        self.sensors.sort_by(|a, b| a.t.total_cmp(&b.t));
        self.events.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
}

/// Reads a JSON-lines trace. Blank lines are skipped.
pub fn read_trace<R: BufRead>(reader: R, th: &Thresholds) -> Result<Trace, TraceError> {
    let mut trace = Trace::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?;
        trace.push(rec, i + 1, th)?;
    }
    trace.sort();
    Ok(trace)
}

/// Reads a JSON-lines stream holding only sensor records.
pub fn read_sensors<R: BufRead>(reader: R) -> Result<Vec<SensorSample>, TraceError> {
    let t = read_trace(reader, &Thresholds::default())?;
    Ok(t.sensors)
}

pub fn write_records<W: Write>(mut w: W, records: &[TraceRecord]) -> Result<(), TraceError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Records of a simulated drive in time order; at equal times fixes come
/// before sensor samples and sensor samples before events.
pub fn sim_records(sim: &SimTrace) -> Vec<TraceRecord> {
    let mut out: Vec<(f64, u8, TraceRecord)> = Vec::new();
    for f in &sim.fixes.fixes {
        out.push((
            f.t,
            0,
            TraceRecord::Fix {
                t: f.t,
                lat: f.loc.lat(),
                lon: f.loc.lon(),
                err_m: f.err_m,
            },
        ));
    }
    for s in &sim.sensors {
        out.push((
            s.t,
            1,
            TraceRecord::Sensor {
                t: s.t,
                heading_deg: s.heading_deg,
                gvar: s.gravity_accel,
            },
        ));
    }
    for e in &sim.events {
        let z = e.event;
        out.push((
            z.t,
            2,
            TraceRecord::Event {
                t: z.t,
                kind: z.kind,
                heading_deg: Some(z.heading_deg),
                lat: Some(z.loc.lat()),
                lon: Some(z.loc.lon()),
                err_m: Some(z.err_m),
            },
        ));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out.into_iter().map(|(_, _, r)| r).collect()
}

/// Completes pending events. A missing location and error come from the
/// latest clean fix at or before the event (the first fix if none is
/// earlier); a missing heading from the smoothed sensor heading, else the
/// bearing between the two latest distinct clean fixes, else 0. Events
/// without any location source are dropped.
pub fn assemble_observations(
    events: &[PendingEvent],
    fixes: &[CleanFix],
    sensors: &[SensorSample],
) -> Vec<Observation> {
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        let k = fixes.partition_point(|f| f.t <= e.t);
        let fix = fixes.get(k.saturating_sub(1));
        let (loc, err_m) = match (e.loc, fix) {
            (Some(loc), fix) => (loc, e.err_m.or(fix.map(|f| f.err_m))),
            (None, Some(f)) => (f.loc, e.err_m.or(Some(f.err_m))),
            (None, None) => continue,
        };
        let Some(err_m) = err_m else { continue };
        let heading_deg = e
            .heading_deg
            .or_else(|| heading_at(sensors, e.t))
            .or_else(|| fix_bearing(&fixes[..k.max(1).min(fixes.len())]))
            .unwrap_or(0.0);
        out.push(Observation {
            t: e.t,
            loc,
            err_m,
            heading_deg,
            kind: e.kind,
        });
    }
    out
}

fn fix_bearing(fixes: &[CleanFix]) -> Option<f64> {
    let last = fixes.last()?;
    let prev = fixes.iter().rev().find(|f| f.loc != last.loc)?;
    bearing(&prev.loc, &last.loc).ok()
}

/// Full pipeline on one trace: filter fixes, smooth sensors, build
/// observations and decode.
pub fn match_trace(
    network: &RoadNetwork,
    confusion: &ConfusionMatrix,
    trace: &Trace,
    filter: &FilterConfig,
    hmm: &HmmConfig,
) -> Result<MatchOutput, TraceError> {
    let fixes = preprocess_fixes(&trace.fixes, &trace.sensors, filter, None)?;
    let sensors = smooth_sensors(&trace.sensors, filter.sensor_bandwidth)?;
    let observations = assemble_observations(&trace.events, &fixes, &sensors);
    Ok(match_observations(
        network,
        confusion,
        *hmm,
        Model::Semantic,
        &observations,
    )?)
}
