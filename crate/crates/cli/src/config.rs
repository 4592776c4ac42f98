//! Serializable run configurations. Every command writes its configuration
//! to `config.json` in its output directory; `rerun` replays it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use binarygp::prediction::MhConfig;
use binarygp::simgen::Generator;
use binarygp::studies::{CvConfig, FriedmanConfig, GpStudyConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate(SimulateConfig),
    Fit(FitConfig),
    Predict(PredictConfig),
    Emulate(EmulateConfig),
    Benchmark(BenchmarkConfig),
}

impl Command {
    pub fn out_dir(&self) -> &Path {
        match self {
            Command::Simulate(c) => &c.out_dir,
            Command::Fit(c) => &c.out_dir,
            Command::Predict(c) => &c.out_dir,
            Command::Emulate(c) => &c.out_dir,
            Command::Benchmark(c) => &c.out_dir,
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Simulate(c) => c.out_dir = dir,
            Command::Fit(c) => c.out_dir = dir,
            Command::Predict(c) => c.out_dir = dir,
            Command::Emulate(c) => c.out_dir = dir,
            Command::Benchmark(c) => c.out_dir = dir,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub generator: Generator,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub kernel_power: f64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub inputs: PathBuf,
    pub panel: PathBuf,
    pub has_header: bool,
    pub order_r: usize,
    pub order_l: usize,
    pub kernel_power: f64,
    pub standardize: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub model: PathBuf,
    /// Query points, one row each.
    pub inputs: PathBuf,
    /// Observed series at the query points (rows match `inputs`).
    pub history: Option<PathBuf>,
    pub has_header: bool,
    /// Time step to predict; defaults to the last history step plus one.
    pub time: Option<usize>,
    pub mh: MhConfig,
    pub quantiles: Vec<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulateConfig {
    pub model: PathBuf,
    pub x: Vec<f64>,
    pub t_out: usize,
    pub mh: MhConfig,
    pub quantiles: Vec<f64>,
    pub write_paths: bool,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "kebab-case")]
pub enum Study {
    Table1(GpStudyConfig),
    Table3(GpStudyConfig),
    Friedman(FriedmanConfig),
    CvScores(CvConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub study: Study,
    pub out_dir: PathBuf,
}

pub fn write_config(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.command.out_dir();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = serde_json::to_string_pretty(cfg)? + "\n";
    std::fs::write(dir.join(CONFIG_FILE), text)?;
    Ok(())
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if cfg.schema_version != CONFIG_SCHEMA_VERSION {
        bail!("config schema version {} is not supported (expected {CONFIG_SCHEMA_VERSION})", cfg.schema_version);
    }
    Ok(cfg)
}
