use super::{PreprocessError, SensorSample};
use crate::geo::{normalize_deg, unwrap_deg};

/// Locally weighted linear regression with tricube weights. The window
/// holds `bandwidth` samples centered on the target (shifted inward at the
/// stream edges); weights fall to zero one sample spacing beyond the
/// farthest window member.
fn loess(t: &[f64], y: &[f64], bandwidth: usize) -> Vec<f64> {
    let n = t.len();
    let half = bandwidth / 2;
    let reach = (bandwidth + 1) as f64 / (bandwidth - 1) as f64;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half).min(n - bandwidth);
            let hi = lo + bandwidth;
            let span = (lo..hi).map(|j| (t[j] - t[i]).abs()).fold(0.0, f64::max) * reach;
            if span <= 0.0 {
                return y[i];
            }
            let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
            let w: Vec<f64> = (lo..hi)
                .map(|j| {
                    let u = ((t[j] - t[i]).abs() / span).min(1.0);
                    (1.0 - u * u * u).powi(3)
                })
                .collect();
            for (k, j) in (lo..hi).enumerate() {
                sw += w[k];
                sx += w[k] * (t[j] - t[i]);
                sy += w[k] * y[j];
            }
            let xbar = sx / sw;
            let ybar = sy / sw;
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for (k, j) in (lo..hi).enumerate() {
                let dx = t[j] - t[i] - xbar;
                sxx += w[k] * dx * dx;
                sxy += w[k] * dx * (y[j] - ybar);
            }
            if sxx > 0.0 {
                ybar - (sxy / sxx) * xbar
            } else {
                ybar
            }
        })
        .collect()
}

/// Low-pass filters gravity and heading. Heading is smoothed in unwrapped
/// angle space and re-wrapped into `[0, 360)`. Streams shorter than the
/// bandwidth are returned unchanged.
pub fn smooth_sensors(
    stream: &[SensorSample],
    bandwidth: usize,
) -> Result<Vec<SensorSample>, PreprocessError> {
    if bandwidth < 3 || bandwidth.is_multiple_of(2) {
        return Err(PreprocessError::BadWindow(bandwidth));
    }
    if stream.len() < bandwidth {
        return Ok(stream.to_vec());
    }
    let t: Vec<f64> = stream.iter().map(|s| s.t).collect();
    let g: Vec<f64> = stream.iter().map(|s| s.gravity_accel).collect();
    let h = unwrap_deg(&stream.iter().map(|s| s.heading_deg).collect::<Vec<_>>());
    let g = loess(&t, &g, bandwidth);
    let h = loess(&t, &h, bandwidth);
    Ok(stream
        .iter()
        .enumerate()
        .map(|(i, s)| SensorSample {
            t: s.t,
            gravity_accel: g[i],
            heading_deg: normalize_deg(h[i]),
        })
        .collect())
}
