//! Road semantics detection: a decision tree over inertial feature
//! summaries and the classifier's confusion matrix, which serves as the
//! detection model inside the HMM.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::roadnet::SemanticType;

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("confusion row for {0} has no mass")]
    EmptyRow(SemanticType),
    #[error("confusion counts must be finite and non-negative")]
    NegativeCount,
    #[error("smoothing constant must be finite and non-negative")]
    BadSmoothing,
    #[error("{0} is not a landmark type")]
    NotALandmark(SemanticType),
    #[error("malformed confusion csv: {0}")]
    Csv(String),
}

/// Summary of one inertial event window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Variance of the vertical gravity component, (m/s²)².
    pub gravity_variance: f64,
    /// Signed heading change integrated over the event window, degrees.
    pub heading_change_deg: f64,
    pub duration_s: f64,
    /// Positive for an up-then-down elevation pattern.
    #[serde(default)]
    pub elevation_cue: f64,
    #[serde(default = "visible")]
    pub gps_visibility: bool,
}

fn visible() -> bool {
    true
}

/// Decision-tree split points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub uturn_min_deg: f64,
    pub uturn_max_deg: f64,
    pub turn_min_deg: f64,
    pub turn_max_deg: f64,
    pub curve_min_deg: f64,
    pub curve_min_duration_s: f64,
    pub bridge_min_cue: f64,
    pub bump_min_variance: f64,
    pub bump_max_duration_s: f64,
    pub cats_eye_min_variance: f64,
    pub cats_eye_max_duration_s: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            uturn_min_deg: 150.0,
            uturn_max_deg: 210.0,
            turn_min_deg: 60.0,
            turn_max_deg: 120.0,
            curve_min_deg: 20.0,
            curve_min_duration_s: 5.0,
            bridge_min_cue: 1.0,
            bump_min_variance: 1.5,
            bump_max_duration_s: 2.0,
            cats_eye_min_variance: 0.3,
            cats_eye_max_duration_s: 10.0,
        }
    }
}

/// Decision-tree classification of a feature summary.
pub fn classify(f: &FeatureVector, th: &Thresholds) -> SemanticType {
    let turn = f.heading_change_deg.abs();
    if !f.gps_visibility {
        return SemanticType::Tunnel;
    }
    if (th.uturn_min_deg..=th.uturn_max_deg).contains(&turn) {
        return SemanticType::UTurn;
    }
    if (th.turn_min_deg..=th.turn_max_deg).contains(&turn) {
        return SemanticType::Turn;
    }
    if turn >= th.curve_min_deg && turn < th.turn_min_deg && f.duration_s > th.curve_min_duration_s {
        return SemanticType::Curve;
    }
    if f.elevation_cue >= th.bridge_min_cue {
        return SemanticType::Bridge;
    }
    if f.gravity_variance >= th.bump_min_variance && f.duration_s <= th.bump_max_duration_s {
        return SemanticType::Bump;
    }
    if f.gravity_variance >= th.cats_eye_min_variance && f.duration_s <= th.cats_eye_max_duration_s {
        return SemanticType::CatsEye;
    }
    SemanticType::NoClass
}

/// Raw detection counts: rows are true landmark types, columns detected
/// types including `NoClass`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionCounts(pub [[f64; 8]; 7]);

impl ConfusionCounts {
    /// Counts observed for the in-vehicle detector.
    pub fn in_vehicle() -> Self {
        let mut m = [[0.0; 8]; 7];
        let diag = [22.0, 37.0, 33.0, 11.0, 15.0, 55.0, 12.0];
        for (i, d) in diag.into_iter().enumerate() {
            m[i][i] = d;
        }
        m[SemanticType::CatsEye.index()][SemanticType::NoClass.index()] = 5.0;
        m[SemanticType::Bridge.index()][SemanticType::NoClass.index()] = 3.0;
        ConfusionCounts(m)
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 8]; 7];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        ConfusionCounts(m)
    }

    pub fn row_total(&self, true_type: SemanticType) -> f64 {
        self.0[true_type.index()].iter().sum()
    }

    /// Reads an 8-column by 7-row CSV with a header row and a leading
    /// column of type names.
    pub fn from_csv<R: Read>(source: R) -> Result<Self, SemanticsError> {
        let csv_err = |e: csv::Error| SemanticsError::Csv(e.to_string());
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let mut cols = Vec::with_capacity(8);
        for h in headers.iter().skip(1) {
            let t: SemanticType = h
                .parse()
                .map_err(|e: crate::roadnet::UnknownSemanticType| SemanticsError::Csv(e.to_string()))?;
            cols.push(t);
        }
        if cols.len() != 8 {
            return Err(SemanticsError::Csv(format!(
                "expected 8 detected columns, got {}",
                cols.len()
            )));
        }
        let mut m = [[f64::NAN; 8]; 7];
        let mut seen = [false; 7];
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let name = rec.get(0).unwrap_or_default();
            let t: SemanticType = name
                .parse()
                .map_err(|e: crate::roadnet::UnknownSemanticType| SemanticsError::Csv(e.to_string()))?;
            if !t.is_landmark() {
                return Err(SemanticsError::NotALandmark(t));
            }
            for (k, col) in cols.iter().enumerate() {
                let v: f64 = rec
                    .get(k + 1)
                    .ok_or_else(|| SemanticsError::Csv(format!("row {name} is short")))?
                    .parse()
                    .map_err(|_| SemanticsError::Csv(format!("row {name}: bad number")))?;
                m[t.index()][col.index()] = v;
            }
            seen[t.index()] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(SemanticsError::Csv("expected one row per landmark type".into()));
        }
        Ok(ConfusionCounts(m))
    }
}

impl Default for ConfusionCounts {
    fn default() -> Self {
        Self::in_vehicle()
    }
}

/// Default additive smoothing applied to every count.
pub const DEFAULT_SMOOTHING: f64 = 0.5;

/// Row-stochastic detection model `p(detected | true)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    probs: [[f64; 8]; 7],
    log_probs: [[f64; 8]; 7],
}

impl ConfusionMatrix {
    /// Row-normalizes `counts + eps`.
    pub fn build(counts: &ConfusionCounts, eps: f64) -> Result<Self, SemanticsError> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(SemanticsError::BadSmoothing);
        }
        let mut probs = [[0.0; 8]; 7];
        let mut log_probs = [[0.0; 8]; 7];
        for t in SemanticType::LANDMARKS {
            let row = &counts.0[t.index()];
            if row.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(SemanticsError::NegativeCount);
            }
            let total: f64 = row.iter().map(|c| c + eps).sum();
            if !(total > 0.0) {
                return Err(SemanticsError::EmptyRow(t));
            }
            for k in 0..8 {
                let p = (row[k] + eps) / total;
                probs[t.index()][k] = p;
                log_probs[t.index()][k] = p.ln();
            }
        }
        Ok(ConfusionMatrix { probs, log_probs })
    }

    pub fn in_vehicle() -> Self {
        Self::build(&ConfusionCounts::in_vehicle(), DEFAULT_SMOOTHING).expect("static counts are valid")
    }

    fn check(true_type: SemanticType) -> Result<usize, SemanticsError> {
        if true_type.is_landmark() {
            Ok(true_type.index())
        } else {
            Err(SemanticsError::NotALandmark(true_type))
        }
    }

    /// `p(detected | true_type)`.
    pub fn detection_prob(
        &self,
        detected: SemanticType,
        true_type: SemanticType,
    ) -> Result<f64, SemanticsError> {
        Ok(self.probs[Self::check(true_type)?][detected.index()])
    }

    /// Probability of passing a landmark without detecting it.
    pub fn miss_prob(&self, true_type: SemanticType) -> Result<f64, SemanticsError> {
        self.detection_prob(SemanticType::NoClass, true_type)
    }

    /// Natural log of `p(detected | true_type)`; panics on a `NoClass` true
    /// type, which never appears in a network.
    #[inline]
    pub fn log_detection(&self, detected: SemanticType, true_type: SemanticType) -> f64 {
        debug_assert!(true_type.is_landmark());
        self.log_probs[true_type.index()][detected.index()]
    }

    #[inline]
    pub fn log_miss(&self, true_type: SemanticType) -> f64 {
        self.log_detection(SemanticType::NoClass, true_type)
    }

    /// Full detection distribution for a true type, indexed by
    /// `SemanticType::index`.
    pub fn row(&self, true_type: SemanticType) -> Result<&[f64; 8], SemanticsError> {
        Ok(&self.probs[Self::check(true_type)?])
    }
}

/// A detected semantic event: the HMM observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticEvent {
    pub t: f64,
    pub loc: GeoPoint,
    /// 1-sigma location error, meters.
    pub err_m: f64,
    pub heading_deg: f64,
    pub kind: SemanticType,
}
