use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;

/// Road semantic classes. `NoClass` is only ever a detection outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    CatsEye,
    Bump,
    Curve,
    Bridge,
    Tunnel,
    Turn,
    UTurn,
    NoClass,
}

impl SemanticType {
    pub const ALL: [SemanticType; 8] = [
        SemanticType::CatsEye,
        SemanticType::Bump,
        SemanticType::Curve,
        SemanticType::Bridge,
        SemanticType::Tunnel,
        SemanticType::Turn,
        SemanticType::UTurn,
        SemanticType::NoClass,
    ];

    /// The seven types that can appear as map landmarks.
    pub const LANDMARKS: [SemanticType; 7] = [
        SemanticType::CatsEye,
        SemanticType::Bump,
        SemanticType::Curve,
        SemanticType::Bridge,
        SemanticType::Tunnel,
        SemanticType::Turn,
        SemanticType::UTurn,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn is_landmark(self) -> bool {
        self != SemanticType::NoClass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticType::CatsEye => "cats_eye",
            SemanticType::Bump => "bump",
            SemanticType::Curve => "curve",
            SemanticType::Bridge => "bridge",
            SemanticType::Tunnel => "tunnel",
            SemanticType::Turn => "turn",
            SemanticType::UTurn => "u_turn",
            SemanticType::NoClass => "no_class",
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown semantic type `{0}`")]
pub struct UnknownSemanticType(pub String);

impl FromStr for SemanticType {
    type Err = UnknownSemanticType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SemanticType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownSemanticType(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u64);

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a hidden state in the network's state space. States are
/// numbered by (segment id, arc offset), so lower ids come first in every
/// deterministic tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticLandmark {
    pub kind: SemanticType,
    pub loc: GeoPoint,
    /// Arc-length position on the parent segment, meters.
    pub offset_m: f64,
}

/// One landmark on one segment: the unit of HMM inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenState {
    pub id: StateId,
    pub segment_id: SegmentId,
    pub kind: SemanticType,
    pub loc: GeoPoint,
    /// Polyline heading at the landmark, degrees in `[0, 360)`.
    pub bearing_deg: f64,
    pub offset_m: f64,
}

impl HiddenState {
    pub fn landmark(&self) -> SemanticLandmark {
        SemanticLandmark {
            kind: self.kind,
            loc: self.loc,
            offset_m: self.offset_m,
        }
    }
}
