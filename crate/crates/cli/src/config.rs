//! Optional TOML settings file. Keys mirror the long flag names with `_` in place of
//! `-`; a flag or `GGP_*` variable always wins over the file.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda_pos: Option<f64>,
    pub lambda_time: Option<f64>,
    pub mode: Option<String>,
    pub synth_dt: Option<f64>,
    pub max_gap: Option<f64>,
    pub resample_dt: Option<f64>,
    pub stiffness: Option<f64>,
    pub ticks: Option<usize>,
    pub dt: Option<f64>,
    pub n: Option<usize>,
    pub steps: Option<usize>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
    pub time_belief: Option<bool>,
    pub coupling: Option<f64>,
    pub grid: Option<usize>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub rate: Option<f64>,
    pub tick_rate: Option<f64>,
    pub k_drag: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag (already merged with its environment variable by clap), then file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
