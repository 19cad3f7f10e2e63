use super::{CleanFix, FilterConfig, SensorSample};
use crate::geo::{bearing, normalize_deg, wrap_deg, GeoPoint};

/// Sensor heading at time `t`, linearly interpolated in unwrapped angle
/// space. `None` outside the stream's time span.
pub fn heading_at(sensors: &[SensorSample], t: f64) -> Option<f64> {
    let first = sensors.first()?;
    let last = sensors.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = sensors.partition_point(|s| s.t <= t);
    if i == 0 {
        return Some(first.heading_deg);
    }
    if i == sensors.len() {
        return Some(last.heading_deg);
    }
    let (a, b) = (&sensors[i - 1], &sensors[i]);
    if b.t <= a.t {
        return Some(a.heading_deg);
    }
    let frac = (t - a.t) / (b.t - a.t);
    Some(normalize_deg(
        a.heading_deg + wrap_deg(b.heading_deg - a.heading_deg) * frac,
    ))
}

/// Rejects fixes that imply a change of direction the inertial heading
/// does not confirm.
///
/// For each fix, the bearing of the leg from the last accepted location is
/// compared with the bearing of the previous accepted leg. When the change
/// exceeds `turn_threshold_deg`, the sensor heading change over the span of
/// both legs must reach `confirm_threshold_deg`, otherwise the fix keeps
/// the last accepted location. The span starts at the latest report of the
/// older position, so a repeated location does not stretch it back over
/// an earlier real turn. Fixes outside sensor coverage pass and are
/// flagged unverified.
pub fn direction_filter(fixes: &[CleanFix], sensors: &[SensorSample], cfg: &FilterConfig) -> Vec<CleanFix> {
    let mut out = Vec::with_capacity(fixes.len());
    // last two accepted, spatially distinct positions
    let mut older: Option<(f64, GeoPoint)> = None;
    let mut newer: Option<(f64, GeoPoint)> = None;
    for fix in fixes {
        let mut f = *fix;
        let mut accept = true;
        if let (Some((t0, p0)), Some((_, p1))) = (older, newer) {
            if let (Ok(b_prev), Ok(b_new)) = (bearing(&p0, &p1), bearing(&p1, &f.loc)) {
                if wrap_deg(b_new - b_prev).abs() > cfg.turn_threshold_deg {
                    match (heading_at(sensors, t0), heading_at(sensors, f.t)) {
                        (Some(h0), Some(h1)) => {
                            if wrap_deg(h1 - h0).abs() < cfg.confirm_threshold_deg {
                                accept = false;
                            }
                        }
                        _ => f.flags.direction_unverified = true,
                    }
                }
            }
        }
        if accept {
            match newer {
                Some((_, p)) if p == f.loc => newer = Some((f.t, p)),
                _ => {
                    older = newer;
                    newer = Some((f.t, f.loc));
                }
            }
        } else {
            f.flags.direction_rejected = true;
            f.loc = newer.expect("rejection needs an accepted fix").1;
        }
        out.push(f);
    }
    out
}
