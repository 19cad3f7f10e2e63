use rstar::primitives::GeomWithData;
use rstar::{RTree, AABB};

use super::HiddenState;
use crate::geo::{geodesic_distance, GeoPoint, EARTH_RADIUS_M};

type Entry = GeomWithData<[f64; 2], usize>;

/// Bulk-loaded R-tree over state locations keyed by `[lon, lat]` degrees.
/// Radius queries filter by a bounding degree box and refine with the
/// haversine distance.
#[derive(Debug)]
pub(super) struct StateIndex {
    tree: RTree<Entry>,
}

impl StateIndex {
    pub fn build(states: &[HiddenState]) -> Self {
        let entries = states
            .iter()
            .enumerate()
            .map(|(i, s)| Entry::new([s.loc.lon(), s.loc.lat()], i))
            .collect();
        StateIndex {
            tree: RTree::bulk_load(entries),
        }
    }

    /// Indices of states within `radius_m` of `center`, ascending.
    pub fn within(&self, center: &GeoPoint, radius_m: f64, states: &[HiddenState]) -> Vec<usize> {
        if !(radius_m >= 0.0) {
            return Vec::new();
        }
        let mut out: Vec<usize> = boxes(center, radius_m)
            .into_iter()
            .flat_map(|b| self.tree.locate_in_envelope(&b))
            .map(|e| e.data)
            .filter(|&i| geodesic_distance(&states[i].loc, center) <= radius_m)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Degree boxes covering the spherical cap of the given radius. The cap
/// may wrap across the antimeridian, in which case it is split.
fn boxes(center: &GeoPoint, radius_m: f64) -> Vec<AABB<[f64; 2]>> {
    const SLACK: f64 = 1e-9;
    let ang = radius_m / EARTH_RADIUS_M;
    let dlat = ang.to_degrees() + SLACK;
    let lat_lo = (center.lat() - dlat).max(-90.0);
    let lat_hi = (center.lat() + dlat).min(90.0);
    let coslat = center.lat().to_radians().cos();
    let ratio = if ang >= std::f64::consts::FRAC_PI_2 {
        f64::INFINITY
    } else {
        ang.sin() / coslat
    };
    let full = |lo: f64, hi: f64| vec![AABB::from_corners([-180.0, lo], [180.0, hi])];
    if !(ratio < 1.0) || lat_hi >= 90.0 || lat_lo <= -90.0 {
        return full(lat_lo, lat_hi);
    }
    let dlon = ratio.asin().to_degrees() + SLACK;
    let lon_lo = center.lon() - dlon;
    let lon_hi = center.lon() + dlon;
    let mut out = vec![AABB::from_corners(
        [lon_lo.max(-180.0), lat_lo],
        [lon_hi.min(180.0), lat_hi],
    )];
    if lon_lo < -180.0 {
        out.push(AABB::from_corners([lon_lo + 360.0, lat_lo], [180.0, lat_hi]));
    }
    if lon_hi >= 180.0 {
        out.push(AABB::from_corners([-180.0, lat_lo], [lon_hi - 360.0, lat_hi]));
    }
    out
}
