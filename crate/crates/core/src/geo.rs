//! Spherical geodesy helpers: haversine distance, initial bearing, angle
//! wrapping and small local offsets.

use std::fmt;

use thiserror::Error;

/// Mean Earth radius used by every distance computation, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("bearing undefined between coincident points")]
    CoincidentPoints,
}

/// A WGS84 position in degrees. Latitude is in `[-90, 90]`, longitude in
/// `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let ok = lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..180.0).contains(&lon);
        if ok {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    /// Builds a point from finite values, clamping latitude and wrapping
    /// longitude into range.
    pub(crate) fn normalized(lat: f64, lon: f64) -> Self {
        debug_assert!(lat.is_finite() && lon.is_finite());
        let lat = lat.clamp(-90.0, 90.0);
        let mut lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
        if lon >= 180.0 {
            lon -= 360.0;
        }
        Self { lat, lon }
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Moves the point by `east_m` / `north_m` meters on the local tangent
    /// plane. Accurate for offsets small relative to the Earth radius.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> Self {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let coslat = self.lat.to_radians().cos().max(1e-12);
        let dlon = (east_m / (EARTH_RADIUS_M * coslat)).to_degrees();
        Self::normalized(self.lat + dlat, self.lon + dlon)
    }

    /// East/north displacement in meters of `other` relative to `self` on
    /// an equirectangular plane anchored at `self`.
    pub fn local_xy(&self, other: &GeoPoint) -> (f64, f64) {
        let coslat = self.lat.to_radians().cos();
        let dlon = wrap_deg(other.lon - self.lon);
        let x = dlon.to_radians() * EARTH_RADIUS_M * coslat;
        let y = (other.lat - self.lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }

    /// Linear interpolation in coordinate space, `frac` in `[0, 1]`.
    pub fn lerp(&self, other: &GeoPoint, frac: f64) -> GeoPoint {
        let dlon = wrap_deg(other.lon - self.lon);
        GeoPoint::normalized(self.lat + (other.lat - self.lat) * frac, self.lon + dlon * frac)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.7}, {:.7})", self.lat, self.lon)
    }
}

/// Great-circle distance in meters (haversine formula).
pub fn geodesic_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Initial great-circle bearing from `a` to `b`, degrees in `[0, 360)`.
pub fn bearing(a: &GeoPoint, b: &GeoPoint) -> Result<f64, GeoError> {
    if a == b {
        return Err(GeoError::CoincidentPoints);
    }
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    if x == 0.0 && y == 0.0 {
        return Err(GeoError::CoincidentPoints);
    }
    Ok(normalize_deg(y.atan2(x).to_degrees()))
}

/// Wraps an angle difference into `(-180, 180]`.
pub fn wrap_deg(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(360.0);
    if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Normalizes a heading into `[0, 360)`.
pub fn normalize_deg(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Unwraps a heading sequence so that consecutive values never jump by
/// more than 180 degrees.
pub fn unwrap_deg(headings: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(headings.len());
    let mut prev: Option<f64> = None;
    for &h in headings {
        let v = match prev {
            None => h,
            Some(p) => p + wrap_deg(h - p),
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 180.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(-90.0, -180.0).is_ok());
    }

    #[test]
    fn distance_identity_and_degree() {
        let a = p(30.0, 31.0);
        assert_eq!(geodesic_distance(&a, &a), 0.0);
        // R * pi / 180
        let d = geodesic_distance(&p(0.0, 0.0), &p(0.0, 1.0));
        assert!((d - 111_194.926_644_558_73).abs() < 1.0, "{d}");
    }

    #[test]
    fn bearing_axes() {
        assert!(bearing(&p(10.0, 10.0), &p(11.0, 10.0)).unwrap().abs() < 1e-9);
        assert!((bearing(&p(0.0, 0.0), &p(0.0, 1.0)).unwrap() - 90.0).abs() < 1e-9);
        assert!((bearing(&p(0.0, 0.0), &p(-1.0, 0.0)).unwrap() - 180.0).abs() < 1e-9);
        assert!((bearing(&p(0.0, 0.0), &p(0.0, -1.0)).unwrap() - 270.0).abs() < 1e-9);
        assert_eq!(
            bearing(&p(5.0, 5.0), &p(5.0, 5.0)),
            Err(GeoError::CoincidentPoints)
        );
    }

    #[test]
    fn wrap_ranges() {
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(190.0), -170.0);
        assert_eq!(wrap_deg(-350.0), 10.0);
        assert_eq!(normalize_deg(-10.0), 350.0);
        assert_eq!(normalize_deg(720.0), 0.0);
    }

    #[test]
    fn unwrap_removes_jumps() {
        let u = unwrap_deg(&[350.0, 355.0, 5.0, 15.0]);
        assert_eq!(u, vec![350.0, 355.0, 365.0, 375.0]);
    }

    #[test]
    fn offset_round_trip() {
        let a = p(30.0, 31.0);
        let b = a.offset_m(300.0, -400.0);
        let d = geodesic_distance(&a, &b);
        assert!((d - 500.0).abs() < 0.01, "{d}");
        let (x, y) = a.local_xy(&b);
        assert!((x - 300.0).abs() < 0.01 && (y + 400.0).abs() < 0.01);
    }
}
