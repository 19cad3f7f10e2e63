//! GeoJSON network files: a `FeatureCollection` where each `LineString`
//! feature is one segment with properties `{id, maxspeed, semantics}`.
//! `maxspeed` is in km/h; `semantics` is a list of `{type, lon, lat}`.

use std::io::{Read, Write};

use serde_json::{json, Value};

use super::{NetworkError, RoadNetwork, SegmentId, SegmentSpec, SemanticType};
use crate::geo::GeoPoint;

fn parse_err(msg: impl Into<String>) -> NetworkError {
    NetworkError::Parse(msg.into())
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn point(v: &Value) -> Result<GeoPoint, NetworkError> {
    let arr = v
        .as_array()
        .ok_or_else(|| parse_err("coordinate is not an array"))?;
    match (
        arr.first().and_then(Value::as_f64),
        arr.get(1).and_then(Value::as_f64),
    ) {
        (Some(lon), Some(lat)) => Ok(GeoPoint::new(lat, lon)?),
        _ => Err(parse_err("coordinate needs [lon, lat]")),
    }
}

fn segment(feature: &Value) -> Result<Option<SegmentSpec>, NetworkError> {
    let geom = &feature["geometry"];
    if geom["type"].as_str() != Some("LineString") {
        log::warn!("skipping non-LineString feature");
        return Ok(None);
    }
    let props = &feature["properties"];
    let id = match &props["id"] {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
    .ok_or_else(|| parse_err("segment feature needs an integer `id` property"))?;
    let polyline = geom["coordinates"]
        .as_array()
        .ok_or_else(|| parse_err(format!("segment {id}: missing coordinates")))?
        .iter()
        .map(point)
        .collect::<Result<Vec<_>, _>>()?;
    let speed_limit_mps = match &props["maxspeed"] {
        Value::Null => None,
        v => Some(as_f64(v).ok_or_else(|| parse_err(format!("segment {id}: bad maxspeed")))? / 3.6),
    };
    let mut landmarks = Vec::new();
    if let Some(items) = props["semantics"].as_array() {
        for item in items {
            let kind: SemanticType = item["type"]
                .as_str()
                .ok_or_else(|| parse_err(format!("segment {id}: semantic without type")))?
                .parse()
                .map_err(|e| parse_err(format!("segment {id}: {e}")))?;
            let (Some(lon), Some(lat)) = (as_f64(&item["lon"]), as_f64(&item["lat"])) else {
                return Err(parse_err(format!("segment {id}: semantic without lon/lat")));
            };
            landmarks.push((kind, GeoPoint::new(lat, lon)?));
        }
    }
    Ok(Some(SegmentSpec {
        id: SegmentId(id),
        polyline,
        speed_limit_mps,
        landmarks,
    }))
}

pub fn read_geojson<R: Read>(source: R) -> Result<RoadNetwork, NetworkError> {
    let doc: Value = serde_json::from_reader(source).map_err(|e| parse_err(e.to_string()))?;
    if doc["type"].as_str() != Some("FeatureCollection") {
        return Err(parse_err("expected a FeatureCollection"));
    }
    let features = doc["features"]
        .as_array()
        .ok_or_else(|| parse_err("FeatureCollection without features"))?;
    let mut specs = Vec::with_capacity(features.len());
    for f in features {
        if let Some(spec) = segment(f)? {
            specs.push(spec);
        }
    }
    RoadNetwork::from_segments(specs)
}

pub fn write_geojson<W: Write>(network: &RoadNetwork, mut out: W) -> Result<(), NetworkError> {
    let features: Vec<Value> = network
        .segments()
        .iter()
        .map(|seg| {
            let coords: Vec<Value> = seg.polyline().iter().map(|p| json!([p.lon(), p.lat()])).collect();
            let semantics: Vec<Value> = seg
                .landmarks()
                .iter()
                .map(|l| json!({"type": l.kind.as_str(), "lon": l.loc.lon(), "lat": l.loc.lat()}))
                .collect();
            let mut props = json!({"id": seg.id().0, "semantics": semantics});
            if let Some(v) = seg.speed_limit_mps() {
                props["maxspeed"] = json!(v * 3.6);
            }
            json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": props,
            })
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_writer(&mut out, &doc).map_err(|e| NetworkError::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}
