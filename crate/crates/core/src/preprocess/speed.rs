use std::collections::VecDeque;

use super::{CleanFix, FilterConfig, PreprocessError, RawFix, RoadSpeed};
use crate::geo::geodesic_distance;

/// Mean of the pairwise speeds between `candidate` and each history fix.
pub fn estimate_speed(history: &[CleanFix], candidate: &RawFix) -> Result<f64, PreprocessError> {
    if history.is_empty() {
        return Err(PreprocessError::EmptyHistory);
    }
    let mut sum = 0.0;
    for h in history {
        let dt = (candidate.t - h.t).abs();
        if dt == 0.0 {
            return Err(PreprocessError::ZeroTimeDelta(h.t));
        }
        sum += geodesic_distance(&h.loc, &candidate.loc) / dt;
    }
    Ok(sum / history.len() as f64)
}

/// Flags fixes implying a speed above the applicable limit plus margin.
/// A flagged fix keeps the last accepted location. The limit comes from
/// `road_speed` at the last accepted location when available, else the
/// configured physical cap. The first fix is always accepted.
pub fn speed_filter(
    stream: &[RawFix],
    cfg: &FilterConfig,
    road_speed: Option<RoadSpeed<'_>>,
) -> Vec<CleanFix> {
    let mut out = Vec::with_capacity(stream.len());
    let mut accepted: VecDeque<CleanFix> = VecDeque::with_capacity(cfg.speed_window + 1);
    for fix in stream {
        let mut clean = CleanFix::from(*fix);
        let Some(last) = accepted.back().copied() else {
            accepted.push_back(clean);
            out.push(clean);
            continue;
        };
        let history: Vec<CleanFix> = accepted.iter().filter(|h| h.t != fix.t).copied().collect();
        let speed = if history.is_empty() {
            None
        } else {
            estimate_speed(&history, fix).ok()
        };
        let limit = road_speed.and_then(|f| f(&last.loc)).unwrap_or(cfg.max_speed_mps);
        if speed.is_some_and(|v| v > limit * (1.0 + cfg.speed_margin)) {
            clean.loc = last.loc;
            clean.flags.speed_rejected = true;
        } else {
            accepted.push_back(clean);
            if accepted.len() > cfg.speed_window {
                accepted.pop_front();
            }
        }
        out.push(clean);
    }
    out
}
