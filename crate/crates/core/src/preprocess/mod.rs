//! Noise reduction for inertial and location streams.
//!
//! Location fixes pass through three filters in order: the speed filter,
//! the alpha-trimmed bouncing filter and the direction filter. Rejected
//! fixes are never dropped; they keep the previously accepted location so
//! that the output stream has the same length as the input.

mod bounce;
mod direction;
mod smooth;
mod speed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

pub use self::bounce::{spatial_sort_keys, trimmed_mean_filter, windowed_mean, windowed_median, GRID_CELLS};
pub use self::direction::{direction_filter, heading_at};
pub use self::smooth::smooth_sensors;
pub use self::speed::{estimate_speed, speed_filter};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("speed history is empty")]
    EmptyHistory,
    #[error("fix at t={0} shares its timestamp with the candidate")]
    ZeroTimeDelta(f64),
    #[error("trim fraction {0} outside [0, 0.5]")]
    BadAlpha(f64),
    #[error("window size {0} must be odd and at least 3")]
    BadWindow(usize),
    #[error("invalid filter config: {0}")]
    BadConfig(&'static str),
}

/// One world-frame inertial sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub t: f64,
    /// Vertical gravity component, m/s².
    #[serde(rename = "gvar")]
    pub gravity_accel: f64,
    pub heading_deg: f64,
}

/// A positioning fix as delivered by the location provider.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawFix {
    pub t: f64,
    pub loc: GeoPoint,
    /// Estimated 1-sigma error, meters.
    pub err_m: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixFlags {
    pub speed_rejected: bool,
    pub bounce_smoothed: bool,
    pub direction_rejected: bool,
    /// The direction check could not run for lack of sensor coverage.
    pub direction_unverified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanFix {
    pub t: f64,
    pub loc: GeoPoint,
    pub err_m: f64,
    pub flags: FixFlags,
}

impl From<RawFix> for CleanFix {
    fn from(f: RawFix) -> Self {
        CleanFix {
            t: f.t,
            loc: f.loc,
            err_m: f.err_m,
            flags: FixFlags::default(),
        }
    }
}

/// Speed limit lookup at a location, m/s.
pub type RoadSpeed<'a> = &'a dyn Fn(&GeoPoint) -> Option<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Number of preceding fixes averaged by the speed estimate.
    #[serde(alias = "w_s")]
    pub speed_window: usize,
    /// Physical speed cap used when no road limit is known, m/s.
    #[serde(alias = "nu_max")]
    pub max_speed_mps: f64,
    /// Tolerance added on top of the speed threshold, as a fraction.
    pub speed_margin: f64,
    #[serde(alias = "alpha")]
    pub trim_alpha: f64,
    #[serde(alias = "w_b")]
    pub bounce_window: usize,
    pub turn_threshold_deg: f64,
    pub confirm_threshold_deg: f64,
    pub sensor_bandwidth: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            speed_window: 3,
            max_speed_mps: 50.0,
            speed_margin: 0.2,
            trim_alpha: 0.2,
            bounce_window: 5,
            turn_threshold_deg: 30.0,
            confirm_threshold_deg: 10.0,
            sensor_bandwidth: 5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.speed_window < 1 {
            return Err(PreprocessError::BadConfig("speed window must be >= 1"));
        }
        if !(0.0..=0.5).contains(&self.trim_alpha) {
            return Err(PreprocessError::BadAlpha(self.trim_alpha));
        }
        if self.bounce_window < 3 || self.bounce_window.is_multiple_of(2) {
            return Err(PreprocessError::BadWindow(self.bounce_window));
        }
        if self.sensor_bandwidth < 3 || self.sensor_bandwidth.is_multiple_of(2) {
            return Err(PreprocessError::BadWindow(self.sensor_bandwidth));
        }
        let positive = [
            self.max_speed_mps,
            self.turn_threshold_deg,
            self.confirm_threshold_deg,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.speed_margin >= 0.0) {
            return Err(PreprocessError::BadConfig("thresholds must be positive"));
        }
        Ok(())
    }
}

/// Runs the full location pipeline: speed filter, bouncing filter, then
/// direction filter against smoothed sensor headings.
pub fn preprocess_fixes(
    raw: &[RawFix],
    sensors: &[SensorSample],
    cfg: &FilterConfig,
    road_speed: Option<RoadSpeed<'_>>,
) -> Result<Vec<CleanFix>, PreprocessError> {
    cfg.validate()?;
    let fixes = speed_filter(raw, cfg, road_speed);
    let fixes = trimmed_mean_filter(&fixes, cfg.trim_alpha, cfg.bounce_window)?;
    let sensors = smooth_sensors(sensors, cfg.sensor_bandwidth)?;
    Ok(direction_filter(&fixes, &sensors, cfg))
}
