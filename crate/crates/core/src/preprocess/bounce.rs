use super::{CleanFix, PreprocessError};
use crate::geo::GeoPoint;

/// Resolution of the row-major grid laid over each filter window.
pub const GRID_CELLS: u32 = 64;

/// Maps each point to its cell index in a `GRID_CELLS`² row-major grid
/// spanning the points' bounding box. Rows run across the box's longer
/// metric side, so the key orders points primarily along the direction of
/// largest spread. Returns `None` when the box is a single point.
pub fn spatial_sort_keys(points: &[GeoPoint]) -> Option<Vec<u32>> {
    let first = points.first()?;
    let (mut lat0, mut lat1, mut lon0, mut lon1) = (first.lat(), first.lat(), first.lon(), first.lon());
    for p in points {
        lat0 = lat0.min(p.lat());
        lat1 = lat1.max(p.lat());
        lon0 = lon0.min(p.lon());
        lon1 = lon1.max(p.lon());
    }
    let (h, w) = (lat1 - lat0, lon1 - lon0);
    if h <= 0.0 && w <= 0.0 {
        return None;
    }
    let cell = |v: f64, lo: f64, extent: f64| -> u32 {
        if extent <= 0.0 {
            0
        } else {
            (((v - lo) / extent * GRID_CELLS as f64).floor() as u32).min(GRID_CELLS - 1)
        }
    };
    let lon_scale = ((lat0 + lat1) / 2.0).to_radians().cos();
    let lat_major = h >= w * lon_scale;
    Some(
        points
            .iter()
            .map(|p| {
                let (r, c) = (cell(p.lat(), lat0, h), cell(p.lon(), lon0, w));
                if lat_major {
                    r * GRID_CELLS + c
                } else {
                    c * GRID_CELLS + r
                }
            })
            .collect(),
    )
}

/// Window positions ordered along the space-filling curve, ties broken by
/// timestamp; pure timestamp order for degenerate windows.
fn curve_order(window: &[CleanFix]) -> Vec<usize> {
    let pts: Vec<GeoPoint> = window.iter().map(|f| f.loc).collect();
    let keys = spatial_sort_keys(&pts);
    let mut order: Vec<usize> = (0..window.len()).collect();
    order.sort_by(|&a, &b| {
        let by_key = match &keys {
            Some(k) => k[a].cmp(&k[b]),
            None => std::cmp::Ordering::Equal,
        };
        by_key.then(window[a].t.total_cmp(&window[b].t)).then(a.cmp(&b))
    });
    order
}

fn window_start(i: usize, n: usize, w: usize) -> usize {
    i.saturating_sub(w / 2).min(n - w)
}

fn check(alpha: f64, w: usize) -> Result<(), PreprocessError> {
    if !(0.0..=0.5).contains(&alpha) {
        return Err(PreprocessError::BadAlpha(alpha));
    }
    if w < 3 || w.is_multiple_of(2) {
        return Err(PreprocessError::BadWindow(w));
    }
    Ok(())
}

/// Coordinate-wise mean of the selected window members, summed in stream
/// order.
fn mean_of(window: &[CleanFix], keep: &[bool]) -> GeoPoint {
    let (mut lat, mut lon, mut n) = (0.0, 0.0, 0usize);
    for (f, &k) in window.iter().zip(keep) {
        if k {
            lat += f.loc.lat();
            lon += f.loc.lon();
            n += 1;
        }
    }
    GeoPoint::normalized(lat / n as f64, lon / n as f64)
}

/// Alpha-trimmed mean over a sliding window of `w` fixes. Each window is
/// ordered along a linear space-filling curve; the `floor(alpha * w)`
/// lowest and highest members are discarded and the rest averaged.
/// `alpha = 0` is the plain windowed mean and `alpha = 0.5` the windowed
/// median along the curve.
pub fn trimmed_mean_filter(
    stream: &[CleanFix],
    alpha: f64,
    w: usize,
) -> Result<Vec<CleanFix>, PreprocessError> {
    check(alpha, w)?;
    let n = stream.len();
    if n < w {
        return Ok(stream.to_vec());
    }
    let trim = (alpha * w as f64 + 1e-12).floor() as usize;
    Ok((0..n)
        .map(|i| {
            let lo = window_start(i, n, w);
            let window = &stream[lo..lo + w];
            let order = curve_order(window);
            let mut keep = vec![false; w];
            for &j in &order[trim..w - trim] {
                keep[j] = true;
            }
            let mut out = stream[i];
            out.loc = mean_of(window, &keep);
            out.flags.bounce_smoothed = out.loc != stream[i].loc;
            out
        })
        .collect())
}

/// Plain windowed mean location, the `alpha = 0` reference.
pub fn windowed_mean(stream: &[CleanFix], w: usize) -> Vec<GeoPoint> {
    let n = stream.len();
    if n < w {
        return stream.iter().map(|f| f.loc).collect();
    }
    (0..n)
        .map(|i| {
            let lo = window_start(i, n, w);
            mean_of(&stream[lo..lo + w], &vec![true; w])
        })
        .collect()
}

/// Middle member of each window along the space-filling curve, the
/// `alpha = 0.5` reference.
pub fn windowed_median(stream: &[CleanFix], w: usize) -> Vec<GeoPoint> {
    let n = stream.len();
    if n < w {
        return stream.iter().map(|f| f.loc).collect();
    }
    (0..n)
        .map(|i| {
            let lo = window_start(i, n, w);
            let window = &stream[lo..lo + w];
            let order = curve_order(window);
            let m = window[order[w / 2]].loc;
            GeoPoint::normalized(m.lat(), m.lon())
        })
        .collect()
}
