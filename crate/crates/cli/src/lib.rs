//! Command-line front end: network indexing, matching, simulation,
//! evaluation and heading-noise calibration.

mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use semmatch_core::eval::{path_from_states, score};
use semmatch_core::matcher::{estimate_sigma_h, MatchStats, SIGMA_H_FLOOR_DEG};
use semmatch_core::roadnet::{read_geojson, write_geojson};
use semmatch_core::semantics::{ConfusionCounts, Thresholds};
use semmatch_core::sim::{generate_network, heading_pairs, simulate};
use semmatch_core::trace::{match_trace, read_sensors, read_trace, sim_records, write_records};
use semmatch_core::{
    ConfusionMatrix, MatchOutput, MatchRecord, NoiseModel, RoadNetwork, Score, SegmentPath, StateId,
};

use config::required;
pub use config::{FileConfig, RunConfig, SimSettings};

/// Smoothing added to every confusion count when loading a CSV.
const CONFUSION_EPS: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "semmatch", version, about = "Semantics-aware HMM map matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load a network, report its size and optionally write it back normalized.
    Index,
    /// Match a trace file, or every `*.jsonl` trace in a directory.
    Match,
    /// Generate a synthetic drive with its ground truth.
    Simulate,
    /// Score matched outputs against ground truth.
    Evaluate,
    /// Estimate the heading noise from ground-truth heading pairs.
    Calibrate,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Road network GeoJSON.
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Trace JSONL file, or a directory of them.
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    /// Extra sensor samples merged into the trace.
    #[arg(long, global = true)]
    pub sensors: Option<PathBuf>,
    /// Ground-truth file or directory.
    #[arg(long, global = true)]
    pub truth: Option<PathBuf>,
    /// Matched output file or directory to evaluate.
    #[arg(long, global = true)]
    pub matched: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML config; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Confusion counts CSV; the built-in in-vehicle counts otherwise.
    #[arg(long, global = true)]
    pub confusion: Option<PathBuf>,
    /// Noise preset: cellular, network or gps_sparse.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Heading noise, degrees.
    #[arg(long = "sigma-h", global = true)]
    pub sigma_h: Option<f64>,
    /// Viterbi window length in steps.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Trim fraction of the bouncing filter.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Candidate radius as a multiple of the observation error.
    #[arg(long = "err-scale", global = true)]
    pub err_scale: Option<f64>,
    /// Landmarks per km on a generated network.
    #[arg(long, global = true)]
    pub density: Option<f64>,
}

impl CommonArgs {
    /// Merges the config file (if any) with the flags; flags win.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut rc = RunConfig::from_file(file);
        rc.network = self.network.clone();
        rc.trace = self.trace.clone();
        rc.sensors = self.sensors.clone();
        rc.truth = self.truth.clone();
        rc.matched = self.matched.clone();
        rc.out = self.out.clone();
        if let Some(c) = &self.confusion {
            rc.confusion = Some(c.clone());
        }
        if let Some(p) = &self.preset {
            rc.preset = p.clone();
        }
        rc.seed = self.seed.or(rc.seed);
        if let Some(v) = self.sigma_h {
            rc.hmm.sigma_h_deg = v;
        }
        if let Some(v) = self.window {
            rc.hmm.window = v;
        }
        if let Some(v) = self.alpha {
            rc.filter.trim_alpha = v;
        }
        if let Some(v) = self.err_scale {
            rc.hmm.err_scale = v;
        }
        if let Some(v) = self.density {
            rc.sim.density_per_km = v;
        }
        Ok(rc)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let rc = cli.args.resolve()?;
    match cli.command {
        Command::Index => cmd_index(&rc),
        Command::Match => cmd_match(&rc).map(|_| ()),
        Command::Simulate => cmd_simulate(&rc).map(|_| ()),
        Command::Evaluate => cmd_evaluate(&rc).map(|_| ()),
        Command::Calibrate => cmd_calibrate(&rc).map(|_| ()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(rc: &RunConfig) -> Result<&Path> {
    let dir = required(&rc.out, "out")?;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

pub fn load_network(path: &Path) -> Result<RoadNetwork> {
    read_geojson(open(path)?).with_context(|| format!("loading network {}", path.display()))
}

pub fn load_confusion(rc: &RunConfig) -> Result<ConfusionMatrix> {
    match &rc.confusion {
        None => Ok(ConfusionMatrix::in_vehicle()),
        Some(p) => {
            let counts =
                ConfusionCounts::from_csv(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            Ok(ConfusionMatrix::build(&counts, CONFUSION_EPS)?)
        }
    }
}

/// Trace id of a file: its name without the given suffix, else without
/// the extension.
fn trace_id(path: &Path, suffix: &str) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    match name.strip_suffix(suffix) {
        Some(id) => id.to_string(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(name),
    }
}

/// Files under `path` ending in `suffix`, sorted; `path` itself if it is a file.
fn collect_files(path: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        ensure!(path.exists(), "{} does not exist", path.display());
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).with_context(|| format!("cannot list {}", path.display()))? {
        let p = entry?.path();
        if p.is_file() && p.to_string_lossy().ends_with(suffix) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Serialize)]
struct IndexSummary {
    segments: usize,
    nodes: usize,
    states: usize,
    total_length_m: f64,
}

pub fn cmd_index(rc: &RunConfig) -> Result<()> {
    let path = required(&rc.network, "network")?;
    let net = load_network(path)?;
    let summary = IndexSummary {
        segments: net.segments().len(),
        nodes: net.node_count(),
        states: net.states().len(),
        total_length_m: net.total_length_m(),
    };
    println!("{}", serde_json::to_string(&summary)?);
    if rc.out.is_some() {
        let dest = out_dir(rc)?.join("network.geojson");
        write_geojson(&net, create(&dest)?)?;
    }
    Ok(())
}

/// Files written for one matched trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchFiles {
    pub id: String,
    pub records: PathBuf,
    pub geojson: PathBuf,
    pub stats: MatchStats,
}

pub fn cmd_match(rc: &RunConfig) -> Result<Vec<MatchFiles>> {
    let net = load_network(required(&rc.network, "network")?)?;
    let confusion = load_confusion(rc)?;
    rc.filter.validate()?;
    rc.hmm.validate()?;
    let traces = collect_files(required(&rc.trace, "trace")?, ".jsonl")?;
    ensure!(!traces.is_empty(), "no traces found");
    let extra_sensors = match &rc.sensors {
        Some(p) => read_sensors(open(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    let dir = out_dir(rc)?;
    let th = Thresholds::default();
    let mut written = Vec::new();
    for path in traces {
        let id = trace_id(&path, ".trace.jsonl");
        let mut trace =
            read_trace(open(&path)?, &th).with_context(|| format!("reading {}", path.display()))?;
        if !extra_sensors.is_empty() {
            trace.sensors.extend_from_slice(&extra_sensors);
            trace.sensors.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        let output = match_trace(&net, &confusion, &trace, &rc.filter, &rc.hmm)
            .with_context(|| format!("matching {}", path.display()))?;
        log::info!("{id}: {:?}", output.stats);
        let records = dir.join(format!("{id}.match.jsonl"));
        write_match_records(&output, create(&records)?)?;
        let geojson = dir.join(format!("{id}.match.geojson"));
        write_match_geojson(&net, &output, create(&geojson)?)?;
        written.push(MatchFiles {
            id,
            records,
            geojson,
            stats: output.stats,
        });
    }
    Ok(written)
}

pub fn write_match_records<W: Write>(output: &MatchOutput, mut w: W) -> Result<()> {
    for r in &output.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Matched path as a FeatureCollection: one LineString per segment in
/// travel order plus one Point per matched landmark state.
pub fn write_match_geojson<W: Write>(net: &RoadNetwork, output: &MatchOutput, mut w: W) -> Result<()> {
    let mut states: Vec<StateId> = output.states().into_iter().flatten().collect();
    states.dedup();
    let path = path_from_states(net, &states)?;
    let mut features = Vec::new();
    for (order, e) in path.entries().iter().enumerate() {
        let Some(seg) = net.segment(e.segment_id) else {
            continue;
        };
        let coords: Vec<[f64; 2]> = seg.polyline().iter().map(|p| [p.lon(), p.lat()]).collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"segment_id": e.segment_id, "order": order},
        }));
    }
    for r in output.records.iter().filter(|r| !r.stale) {
        if let (Some(lat), Some(lon)) = (r.lat, r.lon) {
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": {"t": r.t, "segment_id": r.segment_id},
            }));
        }
    }
    serde_json::to_writer(
        &mut w,
        &json!({"type": "FeatureCollection", "features": features}),
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Ground-truth sidecar of a simulated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub trace_id: String,
    pub segments: SegmentPath,
    /// (observed, true state) heading changes between consecutive events.
    #[serde(default)]
    pub heading_pairs: Vec<(f64, f64)>,
}

/// A truth file may also be a bare segment path.
#[derive(Deserialize)]
#[serde(untagged)]
enum TruthInput {
    Full(TruthFile),
    Path(SegmentPath),
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let parsed: TruthInput =
        serde_json::from_reader(open(path)?).with_context(|| format!("parsing truth {}", path.display()))?;
    Ok(match parsed {
        TruthInput::Full(t) => t,
        TruthInput::Path(segments) => TruthFile {
            trace_id: trace_id(path, ".truth.json"),
            segments,
            heading_pairs: Vec::new(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFiles {
    pub trace: PathBuf,
    pub truth: PathBuf,
    pub network: Option<PathBuf>,
}

pub fn cmd_simulate(rc: &RunConfig) -> Result<SimFiles> {
    let seed = rc.seed.context("--seed is required for simulate")?;
    let noise = NoiseModel::preset(&rc.preset)?;
    let confusion = load_confusion(rc)?;
    let dir = out_dir(rc)?;
    let (net, network) = match &rc.network {
        Some(p) => (load_network(p)?, None),
        None => {
            let net = generate_network(&rc.sim.grid(), seed)?;
            let dest = dir.join("network.geojson");
            write_geojson(&net, create(&dest)?)?;
            (net, Some(dest))
        }
    };
    let sim = simulate(&net, &rc.sim.drive(), &confusion, &noise, seed)?;
    if sim.route.truncated {
        log::warn!("route hit a dead end before {} km", rc.sim.route_km);
    }
    let id = format!("{}-{seed}", noise.name);
    let trace = dir.join(format!("{id}.trace.jsonl"));
    write_records(create(&trace)?, &sim_records(&sim))?;
    let truth = dir.join(format!("{id}.truth.json"));
    let sidecar = TruthFile {
        trace_id: id,
        segments: sim.route.path.clone(),
        heading_pairs: heading_pairs(&sim.events, &net),
    };
    let mut w = create(&truth)?;
    serde_json::to_writer(&mut w, &sidecar)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(SimFiles {
        trace,
        truth,
        network,
    })
}

pub fn read_match_records(path: &Path) -> Result<Vec<MatchRecord>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: MatchRecord =
            serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        out.push(r);
    }
    Ok(out)
}

/// Recovers the decoded states of a match output: on each record's
/// segment, the landmark state nearest to its reported location.
pub fn states_from_records(net: &RoadNetwork, records: &[MatchRecord]) -> Vec<StateId> {
    let mut out: Vec<StateId> = Vec::new();
    for r in records {
        let (Some(seg), Some(loc)) = (r.segment_id, semmatch_core::matcher::record_location(r)) else {
            continue;
        };
        let nearest = net
            .segment_states(seg)
            .iter()
            .map(|s| (semmatch_core::geo::geodesic_distance(&s.loc, &loc), s.id))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, id)) = nearest {
            if out.last() != Some(&id) {
                out.push(id);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceScore {
    pub trace_id: String,
    #[serde(flatten)]
    pub score: Score,
}

fn pair_by_id(matched: Vec<PathBuf>, truth: Vec<PathBuf>) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let m: BTreeMap<String, PathBuf> = matched
        .into_iter()
        .map(|p| (trace_id(&p, ".match.jsonl"), p))
        .collect();
    let t: BTreeMap<String, PathBuf> = truth
        .into_iter()
        .map(|p| (trace_id(&p, ".truth.json"), p))
        .collect();
    let missing: Vec<&String> = m
        .keys()
        .filter(|k| !t.contains_key(*k))
        .chain(t.keys().filter(|k| !m.contains_key(*k)))
        .collect();
    if !missing.is_empty() {
        bail!("trace ids do not pair up between matched and truth inputs: {missing:?}");
    }
    Ok(m.into_iter()
        .map(|(id, mp)| {
            let tp = t[&id].clone();
            (id, mp, tp)
        })
        .collect())
}

pub fn cmd_evaluate(rc: &RunConfig) -> Result<Vec<TraceScore>> {
    let net = load_network(required(&rc.network, "network")?)?;
    let matched = collect_files(required(&rc.matched, "matched")?, ".match.jsonl")?;
    let truth = collect_files(required(&rc.truth, "truth")?, ".truth.json")?;
    let pairs = pair_by_id(matched, truth)?;
    ensure!(!pairs.is_empty(), "nothing to evaluate");
    let dir = out_dir(rc)?;
    let mut csv = create(&dir.join("scores.csv"))?;
    writeln!(
        csv,
        "trace_id,precision,recall,f_measure,x_m,y_m,g_m,precision_undefined"
    )?;
    let mut scores = Vec::new();
    for (id, mp, tp) in pairs {
        let truth = read_truth(&tp)?;
        if truth.trace_id != id {
            bail!(
                "{} names trace {:?}, expected {id:?}",
                tp.display(),
                truth.trace_id
            );
        }
        let states = states_from_records(&net, &read_match_records(&mp)?);
        let output = path_from_states(&net, &states)?;
        let s = score(&output, &truth.segments).with_context(|| format!("scoring {id}"))?;
        let ts = TraceScore {
            trace_id: id,
            score: s,
        };
        let mut w = create(&dir.join(format!("{}.score.json", ts.trace_id)))?;
        serde_json::to_writer_pretty(&mut w, &ts)?;
        w.write_all(b"\n")?;
        w.flush()?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            ts.trace_id, s.precision, s.recall, s.f_measure, s.x_m, s.y_m, s.g_m, s.precision_undefined
        )?;
        scores.push(ts);
    }
    csv.flush()?;
    let mean_f = scores.iter().map(|s| s.score.f_measure).sum::<f64>() / scores.len() as f64;
    println!("traces={} mean_f={mean_f:.4}", scores.len());
    Ok(scores)
}

pub fn cmd_calibrate(rc: &RunConfig) -> Result<f64> {
    let files = collect_files(required(&rc.truth, "truth")?, ".truth.json")?;
    let mut pairs = Vec::new();
    for p in &files {
        pairs.extend(read_truth(p)?.heading_pairs);
    }
    let raw = estimate_sigma_h(&pairs)?;
    let sigma_h = if raw < SIGMA_H_FLOOR_DEG {
        log::warn!("estimated sigma_h {raw} below the {SIGMA_H_FLOOR_DEG} degree floor");
        SIGMA_H_FLOOR_DEG
    } else {
        raw
    };
    println!("sigma_h = {sigma_h}");
    if rc.out.is_some() {
        let dest = out_dir(rc)?.join("calibration.toml");
        let mut w = create(&dest)?;
        writeln!(w, "[hmm]\nsigma_h = {sigma_h}")?;
        w.flush()?;
    }
    Ok(sigma_h)
}
