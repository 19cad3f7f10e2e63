//! Semantics-aware HMM map matching for sparse, noisy, coarse-grained
//! positioning traces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod geo;
pub mod matcher;
pub mod preprocess;
pub mod roadnet;
pub mod semantics;
pub mod sim;
pub mod trace;

pub use eval::{Score, SegmentPath};
pub use geo::GeoPoint;
pub use matcher::{HmmConfig, MatchOutput, MatchRecord, Matcher, Observation};
pub use preprocess::{CleanFix, FilterConfig, RawFix, SensorSample};
pub use roadnet::{HiddenState, RoadNetwork, SegmentId, SemanticType, StateId};
pub use semantics::{ConfusionMatrix, SemanticEvent};
pub use sim::{NoiseModel, SimTrace};
