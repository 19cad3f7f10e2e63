use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use semmatch_core::sim::{DriveSpec, GridSpec};
use semmatch_core::{FilterConfig, HmmConfig};

/// Simulation knobs readable from the `[sim]` config section.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub density_per_km: f64,
    pub route_km: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub segment_length_m: f64,
    pub speed_mps: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        let g = GridSpec::default();
        let d = DriveSpec::default();
        SimSettings {
            density_per_km: g.density_per_km,
            route_km: d.length_m / 1000.0,
            grid_rows: g.rows,
            grid_cols: g.cols,
            segment_length_m: g.segment_length_m,
            speed_mps: d.speed_mps,
        }
    }
}

impl SimSettings {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            rows: self.grid_rows,
            cols: self.grid_cols,
            segment_length_m: self.segment_length_m,
            density_per_km: self.density_per_km,
            ..GridSpec::default()
        }
    }

    pub fn drive(&self) -> DriveSpec {
        DriveSpec {
            length_m: self.route_km * 1000.0,
            speed_mps: self.speed_mps,
            ..DriveSpec::default()
        }
    }
}

/// Contents of a `--config` TOML file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub filter: FilterConfig,
    pub hmm: HmmConfig,
    pub sim: SimSettings,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub confusion: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Everything a command needs after merging the config file with flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub network: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub sensors: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub matched: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub confusion: Option<PathBuf>,
    pub filter: FilterConfig,
    pub hmm: HmmConfig,
    pub sim: SimSettings,
    pub preset: String,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(file: FileConfig) -> Self {
        RunConfig {
            confusion: file.confusion,
            filter: file.filter,
            hmm: file.hmm,
            sim: file.sim,
            preset: file.preset.unwrap_or_else(|| "cellular".to_string()),
            seed: file.seed,
            ..RunConfig::default()
        }
    }
}

pub(crate) fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .with_context(|| format!("--{flag} is required for this command"))
}
