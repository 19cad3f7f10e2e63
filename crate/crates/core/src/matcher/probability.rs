//! Log-domain HMM terms: emission, transition, heading-noise calibration
//! and state priors.

use super::{MatchError, Observation};
use crate::geo::{geodesic_distance, wrap_deg};
use crate::roadnet::{HiddenState, RoadNetwork, SemanticType};
use crate::semantics::ConfusionMatrix;

/// ln(sqrt(2 pi))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian consistency constant for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;

/// Log density of a zero-mean normal at `x`.
#[inline]
pub fn gaussian_log_pdf(x: f64, sigma: f64) -> f64 {
    let u = x / sigma;
    -LN_SQRT_2PI - sigma.ln() - 0.5 * u * u
}

/// Numerically stable `ln(sum(exp(v)))`; `-inf` for an empty or all
/// `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Emission log-probability: detection likelihood of the observed type
/// given the landmark type, times a Gaussian on the distance between the
/// observation and the landmark with the observation's error as sigma.
pub fn observation_log_prob(z: &Observation, s: &HiddenState, m: &ConfusionMatrix) -> f64 {
    let d = geodesic_distance(&z.loc, &s.loc);
    m.log_detection(z.kind, s.kind) + gaussian_log_pdf(d, z.err_m)
}

/// Map heading change between two states. Segment bearings are undirected,
/// so the change is taken as either `b_j - b_i` or that plus 180 degrees,
/// whichever lies closer to the observed change `dtheta_z`.
pub fn state_heading_change(from: &HiddenState, to: &HiddenState, dtheta_z: f64) -> f64 {
    let d = wrap_deg(to.bearing_deg - from.bearing_deg);
    let flipped = wrap_deg(d + 180.0);
    if wrap_deg(dtheta_z - flipped).abs() < wrap_deg(dtheta_z - d).abs() {
        flipped
    } else {
        d
    }
}

/// Transition log-probability from its parts: a Gaussian on the heading
/// residual and one miss factor per skipped landmark.
pub fn transition_log_from_parts<I>(
    dtheta_z: f64,
    dtheta_s: f64,
    skipped: I,
    m: &ConfusionMatrix,
    sigma_h: f64,
) -> f64
where
    I: IntoIterator<Item = SemanticType>,
{
    let residual = wrap_deg(dtheta_z - dtheta_s).abs();
    let mut lp = gaussian_log_pdf(residual, sigma_h);
    for kind in skipped {
        lp += m.log_miss(kind);
        if lp == f64::NEG_INFINITY {
            break;
        }
    }
    lp
}

/// Transition log-probability between two states given the observed
/// heading change. Unreachable pairs get `-inf`.
pub fn transition_log_prob(
    from: &HiddenState,
    to: &HiddenState,
    dtheta_z: f64,
    network: &RoadNetwork,
    m: &ConfusionMatrix,
    sigma_h: f64,
) -> f64 {
    let Ok(skipped) = network.semantics_between(from.id, to.id) else {
        return f64::NEG_INFINITY;
    };
    let dtheta_s = state_heading_change(from, to, dtheta_z);
    transition_log_from_parts(dtheta_z, dtheta_s, skipped.iter().map(|l| l.kind), m, sigma_h)
}

/// Robust heading-noise scale: 1.4826 times the median absolute residual
/// between observed and map heading changes.
pub fn estimate_sigma_h(pairs: &[(f64, f64)]) -> Result<f64, MatchError> {
    if pairs.is_empty() {
        return Err(MatchError::NoCalibrationPairs);
    }
    let mut r: Vec<f64> = pairs.iter().map(|&(z, s)| wrap_deg(z - s).abs()).collect();
    r.sort_by(f64::total_cmp);
    let n = r.len();
    let median = if n % 2 == 1 {
        r[n / 2]
    } else {
        0.5 * (r[n / 2 - 1] + r[n / 2])
    };
    Ok(MAD_SCALE * median)
}

/// Normalizes log weights to sum to one. Returns the uniform distribution
/// and `true` when every weight is `-inf`.
pub fn normalize_log(weights: &mut [f64]) -> bool {
    let total = log_sum_exp(weights);
    if total == f64::NEG_INFINITY || !total.is_finite() {
        let u = -(weights.len() as f64).ln();
        weights.iter_mut().for_each(|w| *w = u);
        return true;
    }
    weights.iter_mut().for_each(|w| *w -= total);
    false
}

/// First-step priors: the detection likelihood of the observed type for
/// each candidate's landmark type, normalized over the candidates.
/// The flag reports a uniform fallback.
pub fn initial_priors(candidates: &[HiddenState], z: &Observation, m: &ConfusionMatrix) -> (Vec<f64>, bool) {
    let mut p: Vec<f64> = candidates
        .iter()
        .map(|s| m.log_detection(z.kind, s.kind))
        .collect();
    let fallback = normalize_log(&mut p);
    (p, fallback)
}

/// Dense transition log-probabilities, rows = previous step, columns =
/// current step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        TransitionMatrix {
            rows,
            cols,
            data: vec![fill; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        TransitionMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.cols + to]
    }

    #[inline]
    pub fn set(&mut self, from: usize, to: usize, v: f64) {
        self.data[from * self.cols + to] = v;
    }
}

/// Carries priors one step forward: `pi_i = sum_j pi_j * p(i | j)`,
/// evaluated with log-sum-exp and normalized. The flag reports a uniform
/// fallback when no mass survives.
pub fn update_priors(prev: &[f64], trans: &TransitionMatrix) -> (Vec<f64>, bool) {
    assert_eq!(prev.len(), trans.rows());
    let mut terms = vec![0.0; prev.len()];
    let mut out: Vec<f64> = (0..trans.cols())
        .map(|i| {
            for (j, t) in terms.iter_mut().enumerate() {
                *t = prev[j] + trans.get(j, i);
            }
            log_sum_exp(&terms)
        })
        .collect();
    let fallback = normalize_log(&mut out);
    (out, fallback)
}
