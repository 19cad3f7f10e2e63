use std::collections::HashMap;

use semmatch_core::geo::geodesic_distance;
use semmatch_core::roadnet::SegmentSpec;
use semmatch_core::semantics::ConfusionCounts;
use semmatch_core::sim::{
    corrupt_positions, emit_semantic_events, generate_network, sample_route, DriveSpec, GridSpec, TruthFix,
};
use semmatch_core::{ConfusionMatrix, GeoPoint, NoiseModel, RoadNetwork, SegmentId, SemanticType};

#[test]
fn landmark_count_tracks_density() {
    // one row of 13 intersections: 12 segments, 10 km of road
    let spec = GridSpec {
        rows: 1,
        cols: 13,
        density_per_km: 2.0,
        ..GridSpec::default()
    };
    let expected = spec.density_per_km * spec.total_length_m() / 1000.0;
    let mean = (0..100)
        .map(|seed| generate_network(&spec, seed).unwrap().states().len() as f64)
        .sum::<f64>()
        / 100.0;
    assert!((mean - expected).abs() <= 0.1 * expected, "{mean} vs {expected}");
}

const DRAWS: usize = 10_000;

/// A single 50 km road along the equator carrying `DRAWS` landmarks of one
/// type, 5 m apart.
fn uniform_road(kind: SemanticType) -> RoadNetwork {
    let start = GeoPoint::new(0.0, 10.0).unwrap();
    let len = DRAWS as f64 * 5.0;
    let end = start.offset_m(len, 0.0);
    let spec = SegmentSpec {
        id: SegmentId(1),
        polyline: vec![start, end],
        speed_limit_mps: None,
        landmarks: (0..DRAWS)
            .map(|k| (kind, start.lerp(&end, (2.5 + 5.0 * k as f64) / len)))
            .collect(),
    };
    RoadNetwork::from_segments(vec![spec]).unwrap()
}

/// Detected-type frequencies (NoClass = dropped) over one pass of the road.
fn detection_frequencies(kind: SemanticType, m: &ConfusionMatrix, seed: u64) -> [f64; 8] {
    let net = uniform_road(kind);
    let drive = DriveSpec {
        length_m: DRAWS as f64 * 5.0,
        ..DriveSpec::default()
    };
    let route = sample_route(&net, &drive, seed).unwrap();
    let events = emit_semantic_events(&route, &net, m, &NoiseModel::network(), seed);
    let mut counts = [0usize; 8];
    for e in &events {
        counts[e.event.kind.index()] += 1;
    }
    counts[SemanticType::NoClass.index()] = DRAWS - events.len();
    counts.map(|c| c as f64 / DRAWS as f64)
}

#[test]
fn detections_follow_confusion_rows() {
    let m = ConfusionMatrix::in_vehicle();
    for (i, kind) in SemanticType::LANDMARKS.into_iter().enumerate() {
        let freq = detection_frequencies(kind, &m, 40 + i as u64);
        let row = m.row(kind).unwrap();
        for (j, (f, p)) in freq.iter().zip(row).enumerate() {
            assert!(
                (f - p).abs() <= 0.02,
                "{kind} -> {:?}: {f} vs {p}",
                SemanticType::ALL[j]
            );
        }
    }
}

#[test]
fn cats_eye_drop_rate() {
    let m = ConfusionMatrix::build(&ConfusionCounts::in_vehicle(), 0.0).unwrap();
    let freq = detection_frequencies(SemanticType::CatsEye, &m, 7);
    let dropped = freq[SemanticType::NoClass.index()];
    assert!((dropped - 5.0 / 27.0).abs() <= 0.02, "{dropped}");
}

fn long_drive(km: f64, seed: u64) -> Vec<TruthFix> {
    let net = generate_network(&GridSpec::default(), seed).unwrap();
    let drive = DriveSpec {
        length_m: km * 1000.0,
        ..DriveSpec::default()
    };
    let route = sample_route(&net, &drive, seed).unwrap();
    assert!(!route.truncated);
    route.truth
}

fn driven_km(truth: &[TruthFix]) -> f64 {
    truth
        .windows(2)
        .map(|w| geodesic_distance(&w[0].loc, &w[1].loc))
        .sum::<f64>()
        / 1000.0
}

/// Mean distance between each freshly drawn fix and the truth at its time.
fn mean_radial_error(truth: &[TruthFix], noise: &NoiseModel, seed: u64) -> (f64, usize) {
    let at: HashMap<u64, GeoPoint> = truth.iter().map(|f| (f.t.to_bits(), f.loc)).collect();
    let out = corrupt_positions(truth, noise, seed);
    let errors: Vec<f64> = out
        .fixes
        .iter()
        .enumerate()
        .filter(|(i, _)| !out.pingpong_indices.contains(i))
        .map(|(_, f)| geodesic_distance(&f.loc, &at[&f.t.to_bits()]))
        .collect();
    (errors.iter().sum::<f64>() / errors.len() as f64, out.fixes.len())
}

#[test]
fn gaussian_noise_has_rayleigh_mean() {
    let truth = long_drive(60.0, 2);
    let noise = NoiseModel {
        name: "dense".into(),
        err_mean_m: 100.0,
        updates_per_km: 100.0,
        pingpong_prob: 0.0,
        pingpong_depth: 0,
    };
    let (mean, n) = mean_radial_error(&truth, &noise, 2);
    assert!(n > 3000);
    let sigma = noise.sigma_m();
    let rayleigh = sigma * (std::f64::consts::PI / 2.0).sqrt();
    assert!((mean - rayleigh).abs() <= 0.03 * rayleigh, "{mean} vs {rayleigh}");
}

#[test]
fn cellular_preset_accuracy_and_rate() {
    let truth = long_drive(100.0, 9);
    let noise = NoiseModel::cellular();
    let (mean, n) = mean_radial_error(&truth, &noise, 9);
    assert!((mean - 1900.0).abs() <= 190.0, "{mean}");
    let rate = (n - 1) as f64 / driven_km(&truth);
    assert!((rate - 1.4).abs() <= 0.14, "{rate}");
}

#[test]
fn corruption_leaves_truth_alone() {
    let truth = long_drive(10.0, 4);
    let copy = truth.clone();
    let _ = corrupt_positions(&truth, &NoiseModel::network(), 4);
    assert_eq!(truth, copy);
}
